"""Curvature reconstruction from centreline field data.

Along the centreline the s-flux coefficient is 1 and the potential is
-gamma^2 / 4, so an eigenpair (lam, phi) or a Poisson pair (phi, f) gives

    gamma^2(s) = -4 lap(phi)(s, 0) / phi(s, 0) - 4 lam
    gamma^2(s) = -4 lap(phi)(s, 0) / phi(s, 0) - 4 f(s, 0) / phi(s, 0)

wherever phi(s, 0) != 0.  The discrete centreline Laplacian used here is
exactly the one hidden in the assembled centreline rows, so for discrete
data both formulas hold to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridError
from .geometry import GuideSpec
from .operator import Field, Grid, assemble
from .profiles import CurvatureProfile, eval_profile
from .solve import Eigenpair

__all__ = [
    "ReconstructionResult",
    "DiscriminationReport",
    "centerline_laplacian",
    "reconstruct_from_eigenpair",
    "reconstruct_from_poisson",
    "select_branch",
    "discrimination_residual",
    "TOL_NEG",
]

MASK_EPS = 1e-3
TOL_NEG = 1e-8
RATIO_FLOOR = 1e-300


@dataclass
class ReconstructionResult:
    """Per-node centreline estimates; entries outside ``mask`` are NaN."""

    s_nodes: np.ndarray
    gamma_sq: np.ndarray
    mask: np.ndarray
    gamma_signed: np.ndarray | None = None
    gamma_true: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_masked(self) -> int:
        return int(self.mask.sum())


@dataclass
class DiscriminationReport:
    residual_matched: float
    residual_alternative: float
    ratio: float
    m_bound_ok: bool
    m_bound_worst: float = float("nan")


def centerline_laplacian(phi: Field) -> np.ndarray:
    """Discrete flat Laplacian of ``phi`` on the centreline nodes.

    Interior s-nodes use centred second differences; the two end nodes use
    one-sided second differences (callers mask them out).  Transverse
    neighbours outside the grid are Dirichlet zeros.
    """
    g = phi.grid
    if g.n_u % 2 == 0:
        raise GridError("grid has no centreline nodes (n_u even)", code="no_centerline")
    if g.n_s < 3:
        raise GridError("need at least three s-nodes for a second difference")
    arr = phi.array
    c = g.center
    center = (slice(None),) + (c,) * (g.dim - 1)
    line = arr[center]

    lap = np.empty_like(line)
    lap[1:-1] = line[:-2] - 2.0 * line[1:-1] + line[2:]
    lap[0] = line[0] - 2.0 * line[1] + line[2]
    lap[-1] = line[-3] - 2.0 * line[-2] + line[-1]
    lap /= g.ds**2

    for ax in range(1, g.dim):
        h = g.du[ax - 1]
        lo = [slice(None)] + [c] * (g.dim - 1)
        hi = list(lo)
        lo[ax] = c - 1
        hi[ax] = c + 1
        below = arr[tuple(lo)] if c >= 1 else 0.0
        above = arr[tuple(hi)] if c + 1 < g.n_u else 0.0
        lap = lap + (below - 2.0 * line + above) / (h * h)
    return lap


def _mask(center: np.ndarray, mask_eps: float) -> np.ndarray:
    amp = np.abs(center)
    top = amp.max() if amp.size else 0.0
    mask = amp >= mask_eps * top if top > 0 else np.zeros(amp.shape, dtype=bool)
    mask &= amp > 0.0
    # one-sided end stencils are polluted by truncation
    mask[0] = mask[-1] = False
    return mask


def _finalize(grid: Grid, gsq: np.ndarray, mask: np.ndarray, truth, what: str) -> ReconstructionResult:
    if not mask.any():
        raise ValueError(f"{what} vanishes on the centreline at this resolution; nothing to reconstruct")
    gsq = np.where(mask, gsq, np.nan)
    res = ReconstructionResult(s_nodes=grid.s.copy(), gamma_sq=gsq, mask=mask)
    if truth is not None:
        attach_truth(res, truth)
    return res


def attach_truth(res: ReconstructionResult, truth: CurvatureProfile) -> ReconstructionResult:
    """Record the true profile and the masked error statistics.

    ``max_rel_err`` is the largest masked |estimate - gamma^2| divided by the
    largest masked gamma^2 (a pointwise ratio is meaningless where the true
    curvature underflows); ``median_rel_err`` uses the same scale.
    """
    g_true = np.asarray(eval_profile(truth, res.s_nodes))
    res.gamma_true = g_true
    m = res.mask
    err = np.abs(res.gamma_sq[m] - g_true[m] ** 2)
    scale = float(np.max(g_true[m] ** 2)) if m.any() else 0.0
    res.diagnostics.update(
        max_abs_err=float(err.max()),
        max_rel_err=float(err.max() / scale) if scale > 0 else float(err.max()),
        median_rel_err=float(np.median(err) / scale) if scale > 0 else float(np.median(err)),
        error_scale=scale,
    )
    return res


def reconstruct_from_eigenpair(
    e: Eigenpair, mask_eps: float = MASK_EPS, truth: CurvatureProfile | None = None
) -> ReconstructionResult:
    """gamma^2 = -4 lap(phi)/phi - 4 lam on centreline nodes where |phi| is not small."""
    phi = e.phi
    center = phi.centerline()
    mask = _mask(center, mask_eps)
    lap = centerline_laplacian(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        gsq = -4.0 * lap / center - 4.0 * e.lam
    return _finalize(phi.grid, gsq, mask, truth, "eigenfunction")


def reconstruct_from_poisson(
    phi: Field, f: Field, mask_eps: float = MASK_EPS, truth: CurvatureProfile | None = None
) -> ReconstructionResult:
    """gamma^2 = -4 (lap(phi) + f) / phi on centreline nodes where |phi| is not small."""
    if phi.grid != f.grid:
        raise GridError("phi and f live on different grids")
    center = phi.centerline()
    mask = _mask(center, mask_eps)
    lap = centerline_laplacian(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        gsq = -4.0 * (lap + f.centerline()) / center
    return _finalize(phi.grid, gsq, mask, truth, "solution")


def select_branch(r: ReconstructionResult, sign: str = "nonnegative", tol_neg: float = TOL_NEG) -> ReconstructionResult:
    """Attach a signed curvature: +-sqrt(max(gamma^2, 0)) on the mask.

    The sign is a declared modelling choice (simply-bent guide), not
    inferred from data.  Estimates below ``-tol_neg`` are listed in
    ``diagnostics['negative_nodes']``; smaller negatives are clamped silently.
    """
    if sign not in ("nonnegative", "nonpositive"):
        raise ValueError(f"sign must be 'nonnegative' or 'nonpositive', got {sign!r}")
    gsq = np.asarray(r.gamma_sq, dtype=float)
    with np.errstate(invalid="ignore"):
        bad = r.mask & (gsq < -tol_neg)
        mag = np.sqrt(np.where(r.mask, np.maximum(gsq, 0.0), np.nan))
    signed = mag if sign == "nonnegative" else -mag
    diag = dict(r.diagnostics)
    diag["negative_nodes"] = np.flatnonzero(bad).tolist()
    diag["sign"] = sign
    return ReconstructionResult(
        s_nodes=r.s_nodes,
        gamma_sq=r.gamma_sq,
        mask=r.mask,
        gamma_signed=signed,
        gamma_true=r.gamma_true,
        diagnostics=diag,
    )


def discrimination_residual(
    spec: GuideSpec,
    p1: CurvatureProfile,
    p2: CurvatureProfile,
    phi: Field,
    f: Field,
    M: float | None = None,
    floor: float = RATIO_FLOOR,
) -> DiscriminationReport:
    """Relative residuals of (phi, f) against H_p1 and H_p2.

    Operators are assembled fresh on ``phi.grid``; in 3D both share the
    torsion of ``spec``.  With ``M`` given, also checks |f| <= M |phi| on
    the nodes where phi does not vanish.
    """
    grid = phi.grid
    fn = np.linalg.norm(f.values)
    if fn == 0.0:
        raise ValueError("f must be non-null")
    r1 = float(np.linalg.norm(assemble(grid, spec, p1).matrix @ phi.values - f.values) / fn)
    r2 = float(np.linalg.norm(assemble(grid, spec, p2).matrix @ phi.values - f.values) / fn)
    ok, worst = True, float("nan")
    if M is not None:
        nz = phi.values != 0.0
        lhs = np.abs(f.values[nz])
        rhs = M * np.abs(phi.values[nz])
        # one rounding of slack: f = M phi must pass
        ok = bool(np.all(lhs <= rhs * (1.0 + 4e-16)))
        worst = float(np.max(lhs / rhs)) if nz.any() else float("nan")
    return DiscriminationReport(
        residual_matched=r1,
        residual_alternative=r2,
        ratio=r2 / max(r1, floor),
        m_bound_ok=ok,
        m_bound_worst=worst,
    )
