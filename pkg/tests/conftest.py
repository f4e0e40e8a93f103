import pytest

from curvguide.geometry import GuideSpec
from curvguide.operator import Grid, assemble
from curvguide.profiles import CurvatureProfile

# criterion id -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def gauss():
    return CurvatureProfile("gaussian", 0.3, 1.0)


@pytest.fixture(scope="session")
def strip():
    return GuideSpec(dim=2, L=15.0, d=1.0)


@pytest.fixture(scope="session")
def small_op(strip, gauss):
    """Curved 2D operator on a coarse grid (dense-oracle sized)."""
    return assemble(Grid.for_guide(strip, 149, 9), strip, gauss)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("ab")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
