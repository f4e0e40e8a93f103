"""Exception types shared across the package."""


class GuideError(Exception):
    """Base class; ``code`` is a short machine-readable tag."""

    code = "guide_error"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class SmoothnessError(GuideError, ValueError):
    code = "order_exceeds_smoothness"


class AssumptionError(GuideError, ValueError):
    """A geometric standing assumption is violated (e.g. nonpositive metric)."""

    code = "assumption_violated"


class GridError(GuideError, ValueError):
    code = "grid_mismatch"


class SolverError(GuideError, RuntimeError):
    """Iterative solver did not reach its tolerance.

    ``best_residual`` holds the smallest residual seen and ``history`` the
    residual trace when one was recorded.
    """

    code = "solver_failed"

    def __init__(self, message, best_residual=float("nan"), history=None, code=None):
        super().__init__(message, code=code)
        self.best_residual = best_residual
        self.history = list(history) if history is not None else []
