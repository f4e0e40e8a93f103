"""Straightened Hamiltonians H_gamma (2D) and H_k (3D) and their discretization.

The continuum operators on the straight strip / tube are

    H_gamma = -d_s (c d_s) - d_u^2 + V_gamma,        c = (1 - u gamma)^-2
    H_k     = -d_s (h^-2 d_s) - d_u2^2 - d_u3^2 + V_k

with Dirichlet conditions on the boundary of [-L, L] x cross-section.  The
discretization is the conservative second-order stencil: s-fluxes use the
coefficient at s half-points, transverse directions use plain three-point
differences, and the potential sits on the diagonal.  Unknowns are stored
s-major (then u, then u3).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
import scipy.sparse as sp

from .errors import AssumptionError, GridError
from .geometry import GuideSpec, metric_factor
from .profiles import CurvatureProfile, TorsionSpec, eval_profile, validate_assumptions

__all__ = [
    "Grid",
    "Field",
    "DiscreteOperator",
    "coeff_c",
    "coeff_s",
    "potential_v2",
    "potential_v3",
    "potential",
    "assemble",
    "apply",
    "straighten_inverse",
    "write_triplets",
]


@dataclass(frozen=True)
class Grid:
    """Tensor grid of interior nodes on [-L, L] x cross-section.

    ``n_u`` is the node count on each transverse axis and must be odd so
    that the centreline is a grid line.
    """

    dim: int
    L: float
    n_s: int
    n_u: int
    widths: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        if len(self.widths) != self.dim - 1:
            raise GridError(f"need {self.dim - 1} cross-section widths, got {self.widths}")
        if self.n_s < 1 or self.n_u < 1:
            raise GridError("grid needs at least one interior node per axis")
        if self.n_u % 2 == 0:
            raise GridError(f"n_u must be odd so u = 0 is a node, got {self.n_u}", code="n_u_even")
        object.__setattr__(self, "widths", tuple(float(w) for w in self.widths))

    @classmethod
    def for_guide(cls, spec: GuideSpec, n_s: int, n_u: int) -> "Grid":
        return cls(dim=spec.dim, L=spec.L, n_s=n_s, n_u=n_u, widths=spec.widths)

    @property
    def ds(self) -> float:
        return 2.0 * self.L / (self.n_s + 1)

    @property
    def du(self) -> tuple[float, ...]:
        return tuple(w / (self.n_u + 1) for w in self.widths)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_s,) + (self.n_u,) * (self.dim - 1)

    @property
    def size(self) -> int:
        return self.n_s * self.n_u ** (self.dim - 1)

    @property
    def center(self) -> int:
        """Index of u = 0 along each transverse axis."""
        return self.n_u // 2

    @cached_property
    def s(self) -> np.ndarray:
        return -self.L + self.ds * np.arange(1, self.n_s + 1)

    @cached_property
    def s_half(self) -> np.ndarray:
        """The n_s + 1 flux points between consecutive s-nodes (and the ends)."""
        return -self.L + self.ds * (np.arange(self.n_s + 1) + 0.5)

    def u(self, axis: int = 0) -> np.ndarray:
        w, h = self.widths[axis], self.du[axis]
        u = -0.5 * w + h * np.arange(1, self.n_u + 1)
        u[self.center] = 0.0  # exact zero on the centreline
        return u

    def mesh(self, s=None):
        """Broadcast coordinate arrays (s, u) or (s, u2, u3) over the grid."""
        s = self.s if s is None else s
        axes = [s] + [self.u(i) for i in range(self.dim - 1)]
        return np.meshgrid(*axes, indexing="ij")

    def cell_volume(self) -> float:
        return self.ds * math.prod(self.du)

    def centerline_index(self) -> np.ndarray:
        """Flat indices of the centreline nodes, ordered by s."""
        idx = np.arange(self.size).reshape(self.shape)
        c = self.center
        return idx[(slice(None),) + (c,) * (self.dim - 1)].copy()

    def to_dict(self) -> dict:
        return {"dim": self.dim, "L": self.L, "n_s": self.n_s, "n_u": self.n_u, "widths": list(self.widths)}


@dataclass
class Field:
    """Real values at the interior nodes; zero on the Dirichlet boundary."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise GridError(f"field has {v.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        """Sample ``fn(s, u)`` (2D) or ``fn(s, u2, u3)`` (3D) on the grid."""
        return cls(grid, np.broadcast_to(fn(*grid.mesh()), grid.shape).ravel())

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.size))

    @property
    def array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def centerline(self) -> np.ndarray:
        return self.values[self.grid.centerline_index()]

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass
class DiscreteOperator:
    """Sparse symmetric matrix of H on ``grid`` plus its provenance."""

    matrix: sp.csr_matrix
    grid: Grid
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()


def _metric_2d(p, s, u):
    jac = 1.0 - u * eval_profile(p, s)
    if np.any(jac <= 0.0):
        raise AssumptionError("nonpositive metric factor 1 - u gamma(s)", code="nonpositive_metric")
    return jac


def coeff_c(p: CurvatureProfile, s, u):
    """s-flux coefficient c_gamma = (1 - u gamma(s))^-2."""
    jac = _metric_2d(p, s, u)
    return 1.0 / (jac * jac)


def potential_v2(p: CurvatureProfile, s, u):
    """Curvature-induced potential of the straightened strip.

    V = -g^2 / (4 J^2) - u g'' / (2 J^3) - 5 u^2 g'^2 / (4 J^4),  J = 1 - u g.
    """
    u = np.asarray(u, dtype=float)
    g0 = eval_profile(p, s)
    g1 = eval_profile(p, s, 1)
    g2 = eval_profile(p, s, 2)
    jac = _metric_2d(p, s, u)
    return -(g0 * g0) / (4.0 * jac**2) - u * g2 / (2.0 * jac**3) - 5.0 * u * u * g1 * g1 / (4.0 * jac**4)


def potential_v3(k: CurvatureProfile, torsion: TorsionSpec, s, u2, u3):
    """Potential of the straightened tube, written through h and its s-derivatives.

    V = -k^2 / (4 h^2) + h_ss / (2 h^3) - 5 h_s^2 / (4 h^4).
    """
    spec = GuideSpec(dim=3, torsion=torsion)
    m = metric_factor(spec, k, s, (u2, u3))
    h = m.jacobian
    k0 = eval_profile(k, s)
    return -(k0 * k0) / (4.0 * h**2) + m.ds2_h / (2.0 * h**3) - 5.0 * m.ds_h**2 / (4.0 * h**4)


def coeff_s(spec: GuideSpec, p: CurvatureProfile, s, u):
    """s-flux coefficient for either dimension (c_gamma or h^-2)."""
    if spec.dim == 2:
        return coeff_c(p, s, u)
    h = metric_factor(spec, p, s, u).jacobian
    return 1.0 / (h * h)


def potential(spec: GuideSpec, p: CurvatureProfile, s, u):
    if spec.dim == 2:
        return potential_v2(p, s, u)
    return potential_v3(p, spec.torsion, s, u[0], u[1])


def assemble(grid: Grid, spec: GuideSpec, p: CurvatureProfile, check: bool = True) -> DiscreteOperator:
    """Assemble the Dirichlet discretization of H_gamma / H_k on ``grid``.

    With ``check`` the geometric assumptions are validated first and a
    violation raises AssumptionError.  A straight guide is accepted.
    """
    if grid.dim != spec.dim or grid.widths != spec.widths or grid.L != spec.L:
        raise GridError("grid does not match the guide specification")
    if check:
        rep = validate_assumptions(p, spec)
        if not rep.geometry_ok:
            raise AssumptionError("; ".join(rep.notes) or "geometric assumptions violated")

    ds = grid.ds
    du = grid.du
    half = grid.mesh(grid.s_half)
    nodes = grid.mesh()
    if grid.dim == 2:
        c_half = coeff_c(p, half[0], half[1])
        V = potential_v2(p, nodes[0], nodes[1])
    else:
        c_half = coeff_s(spec, p, half[0], (half[1], half[2]))
        V = potential_v3(p, spec.torsion, nodes[0], nodes[1], nodes[2])

    inv_ds2 = 1.0 / (ds * ds)
    inv_du2 = [1.0 / (h * h) for h in du]
    diag = (c_half[:-1] + c_half[1:]) * inv_ds2 + 2.0 * sum(inv_du2) + V

    idx = np.arange(grid.size).reshape(grid.shape)
    rows, cols, vals = [], [], []
    # s-neighbours: flux coefficient at the shared half-point
    rows.append(idx[:-1].ravel())
    cols.append(idx[1:].ravel())
    vals.append((-c_half[1:-1] * inv_ds2).ravel())
    for ax, w in enumerate(inv_du2, start=1):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        r = idx[tuple(lo)].ravel()
        rows.append(r)
        cols.append(idx[tuple(hi)].ravel())
        vals.append(np.full(r.size, -w))
    n = grid.size
    upper = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    # storing U and U^T from the same values makes paired entries bit-identical
    A = (sp.diags(diag.ravel(), format="csr") + upper + upper.T).tocsr()
    A.sort_indices()
    prov = {"profile": p.to_dict(), "grid": grid.to_dict(), "dim": spec.dim, "v_min": float(V.min())}
    if spec.dim == 3:
        prov["torsion"] = spec.torsion.to_dict()
    return DiscreteOperator(matrix=A, grid=grid, provenance=prov)


def apply(A: DiscreteOperator, x: Field) -> Field:
    if x.grid != A.grid:
        raise GridError("field and operator live on different grids")
    return Field(A.grid, A.matrix @ x.values)


def straighten_inverse(spec: GuideSpec, p: CurvatureProfile, phi: Field) -> Field:
    """Undo the unitary straightening: multiply node-wise by J^(-1/2).

    The result is the physical-guide function expressed in (s, u)
    coordinates; its J-weighted norm equals the flat norm of ``phi``.
    """
    g = phi.grid
    nodes = g.mesh()
    u = nodes[1] if g.dim == 2 else (nodes[1], nodes[2])
    jac = metric_factor(spec, p, nodes[0], u).jacobian
    return Field(g, phi.values / np.sqrt(jac).ravel())


def write_triplets(A: DiscreteOperator, path) -> None:
    """Dump the matrix as 'row col value' lines (0-based, full pattern)."""
    coo = A.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# n={A.n} nnz={coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")
