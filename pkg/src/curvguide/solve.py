"""Eigenpairs and Poisson solves for the discrete straightened operator."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GridError, SolverError
from .geometry import GuideSpec
from .operator import DiscreteOperator, Field

__all__ = [
    "SolveOptions",
    "Eigenpair",
    "ground_eigenpair",
    "eigenpairs",
    "poisson_solve",
    "essential_spectrum_threshold",
    "discrete_threshold",
    "dense_oracle",
    "lower_bound",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 20_000
PRECONDITIONERS = ("none", "diagonal", "incomplete-factor")
METHODS = ("shift-invert", "lobpcg")
_CG_RESTARTS = 8


@dataclass
class SolveOptions:
    """Tolerances and strategy for the eigen and linear solvers.

    ``method`` picks the eigensolver: ``"shift-invert"`` (Lanczos on a
    sparse LU of A - sigma I, sigma a guaranteed lower bound) or
    ``"lobpcg"`` (blocked preconditioned Rayleigh-quotient minimization).
    ``preconditioner`` applies to lobpcg and to the CG Poisson solver.
    """

    eig_tol: float = 1e-10
    lin_tol: float = 1e-12
    max_iter: int = 5000
    block_size: int = 4
    preconditioner: str = "diagonal"
    method: str = "shift-invert"
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if not (self.eig_tol > 0 and self.lin_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.block_size < 1:
            raise ValueError("max_iter and block_size must be >= 1")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Eigenpair:
    lam: float
    phi: Field
    residual_norm: float
    iterations: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def near_threshold(self) -> bool:
        return any("truncation" in n for n in self.notes)


def essential_spectrum_threshold(spec: GuideSpec) -> float:
    """Lowest Dirichlet eigenvalue of the cross-section."""
    return sum((math.pi / w) ** 2 for w in spec.widths)


def discrete_threshold(grid) -> float:
    """Bottom of the essential spectrum of the s-infinite discrete operator.

    Sum over transverse axes of the smallest eigenvalue of the three-point
    Dirichlet second difference, (4/h^2) sin^2(pi h / (2 w)).
    """
    return sum(
        4.0 / h**2 * math.sin(math.pi * h / (2.0 * w)) ** 2 for h, w in zip(grid.du, grid.widths)
    )


def lower_bound(A: DiscreteOperator) -> float:
    """A guaranteed lower bound for the smallest eigenvalue of A.

    For an assembled guide operator the s-flux part is positive
    semidefinite and the transverse part is bounded below by
    ``discrete_threshold``, so lambda_1 >= discrete_threshold + min(V).
    Other matrices fall back to the Gershgorin bound.
    """
    v_min = A.provenance.get("v_min")
    if v_min is not None:
        return discrete_threshold(A.grid) + v_min
    M = A.matrix
    diag = M.diagonal()
    radius = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - radius))


def _rng(opts: SolveOptions):
    return np.random.default_rng(opts.seed)


def _finish(A: DiscreteOperator, lam: float, vec: np.ndarray, its: int, threshold=None) -> Eigenpair:
    vec = vec / np.linalg.norm(vec)
    if vec.sum() < 0:
        vec = -vec
    r = A.matrix @ vec - lam * vec
    notes = []
    if threshold is not None and lam >= threshold - 1e-6:
        notes.append("possibly truncation artifact: eigenvalue at or above the threshold")
    return Eigenpair(float(lam), Field(A.grid, vec), float(np.linalg.norm(r)), its, notes)


def _rayleigh_polish(A, lam, vec, lu_shift, tol, max_steps=3):
    """Inverse-iteration polish with a fixed factorization; returns (lam, vec)."""
    M = A.matrix
    for _ in range(max_steps):
        r = M @ vec - lam * vec
        if np.linalg.norm(r) <= 0.1 * tol:
            break
        vec = lu_shift(vec)
        vec /= np.linalg.norm(vec)
        lam = float(vec @ (M @ vec))
    return lam, vec


def _shift_invert(A: DiscreteOperator, m: int, opts: SolveOptions):
    sigma = lower_bound(A)
    sigma -= 1e-3 * max(1.0, abs(sigma))
    n = A.n
    shifted = (A.matrix - sigma * sp.identity(n, format="csr")).tocsc()
    lu = spla.splu(shifted)
    count = [0]

    def solve(x):
        count[0] += 1
        return lu.solve(np.asarray(x, dtype=float).ravel())

    OPinv = spla.LinearOperator((n, n), matvec=solve, dtype=float)
    v0 = _rng(opts).standard_normal(n)
    if m >= n:
        w, V = sla.eigh(A.matrix.toarray())
        return w[:m], V[:, :m], count[0], solve
    w, V = spla.eigsh(
        A.matrix,
        k=m,
        sigma=sigma,
        which="LM",
        OPinv=OPinv,
        v0=v0,
        tol=0.0,
        maxiter=opts.max_iter,
        ncv=min(n, max(2 * m + 1, 20)),
    )
    order = np.argsort(w)
    return w[order], V[:, order], count[0], solve


def _lobpcg(A: DiscreteOperator, m: int, opts: SolveOptions):
    n = A.n
    k = min(n, max(m, opts.block_size))
    X = _rng(opts).standard_normal((n, k))
    M = _preconditioner(A, opts.preconditioner)
    w, V, hist = spla.lobpcg(
        A.matrix,
        X,
        M=M,
        tol=opts.eig_tol,
        maxiter=opts.max_iter,
        largest=False,
        retResidualNormsHistory=True,
    )
    order = np.argsort(w)[:m]
    return w[order], V[:, order], len(hist), None


def eigenpairs(A: DiscreteOperator, m: int, opts: SolveOptions | None = None, threshold=None) -> list[Eigenpair]:
    """The ``m`` lowest eigenpairs of A, ascending.

    Each pair is unit-normalized with a positive sum and carries its true
    residual ||A phi - lambda phi||.  Pairs at or above ``threshold`` (if
    given) are annotated as possible truncation artifacts.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    opts = opts or SolveOptions()
    if opts.method == "shift-invert":
        w, V, its, solve = _shift_invert(A, m, opts)
    else:
        w, V, its, solve = _lobpcg(A, m, opts)
    pairs = []
    for j in range(len(w)):
        lam, vec = float(w[j]), V[:, j].copy()
        e = _finish(A, lam, vec, its, threshold)
        if e.residual_norm > opts.eig_tol and solve is not None and m == 1:
            lam, vec = _rayleigh_polish(A, lam, e.phi.values, solve, opts.eig_tol)
            e = _finish(A, lam, vec, its, threshold)
        if not e.residual_norm <= opts.eig_tol:
            raise SolverError(
                f"eigenpair {j} residual {e.residual_norm:.3e} above tolerance {opts.eig_tol:.1e}",
                best_residual=e.residual_norm,
            )
        pairs.append(e)
    return pairs


def ground_eigenpair(A: DiscreteOperator, opts: SolveOptions | None = None, threshold=None) -> Eigenpair:
    return eigenpairs(A, 1, opts, threshold)[0]


def spectral_gap(pairs: list[Eigenpair]) -> float:
    return pairs[1].lam - pairs[0].lam if len(pairs) > 1 else math.nan


def _preconditioner(A: DiscreteOperator, kind: str):
    n = A.n
    if kind == "none":
        return None
    if kind == "diagonal":
        inv = 1.0 / A.diagonal()
        return spla.LinearOperator((n, n), matvec=lambda x: inv * np.ravel(x), dtype=float)
    ilu = spla.spilu(A.matrix.tocsc(), drop_tol=1e-5, fill_factor=20)
    return spla.LinearOperator((n, n), matvec=lambda x: ilu.solve(np.ravel(x)), dtype=float)


def poisson_solve(A: DiscreteOperator, f: Field, opts: SolveOptions | None = None) -> Field:
    """Solve A phi = f by preconditioned conjugate gradients.

    CG is restarted from its current iterate until the true relative
    residual ||A phi - f|| / ||f|| is at most ``lin_tol``.
    """
    opts = opts or SolveOptions()
    if f.grid != A.grid:
        raise GridError("right-hand side and operator live on different grids")
    b = f.values
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return Field.zeros(A.grid)
    M = _preconditioner(A, opts.preconditioner)
    x = np.zeros_like(b)
    history = []
    for _ in range(_CG_RESTARTS):
        x, _info = spla.cg(
            A.matrix,
            b,
            x0=x,
            rtol=0.5 * opts.lin_tol,
            atol=0.0,
            maxiter=opts.max_iter,
            M=M,
        )
        rel = float(np.linalg.norm(A.matrix @ x - b) / bnorm)
        history.append(rel)
        if rel <= opts.lin_tol:
            return Field(A.grid, x)
    raise SolverError(
        f"conjugate gradients stalled at relative residual {min(history):.3e}",
        best_residual=min(history),
        history=history,
    )


def dense_oracle(A: DiscreteOperator) -> list[Eigenpair]:
    """Full dense eigendecomposition; a reference for the iterative solvers."""
    if A.n > DENSE_LIMIT:
        raise ValueError(f"dense oracle limited to {DENSE_LIMIT} unknowns, got {A.n}")
    w, V = sla.eigh(A.matrix.toarray())
    R = A.matrix @ V - V * w
    res = np.linalg.norm(R, axis=0)
    out = []
    for j in range(len(w)):
        v = V[:, j]
        if v.sum() < 0:
            v = -v
        out.append(Eigenpair(float(w[j]), Field(A.grid, v), float(res[j]), 0))
    return out
