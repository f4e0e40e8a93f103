"""Closed-form curvature and torsion-angle profiles.

Every family carries exact derivatives up to order 5, so the effective
potential (which needs the second derivative) and the smoother reconstruction
pipelines never rely on numerical differentiation of the geometry.

Families
--------
zero
    gamma(s) = 0.
gaussian
    gamma(s) = a * exp(-s**2 / sigma**2).
sech2
    gamma(s) = a * sech(s / sigma)**2.
constant_bump
    gamma(s) = a on |s| <= plateau, falling to 0 over a ramp of width sigma
    through a degree-11 polynomial step whose first five derivatives vanish
    at both ends; compactly supported and C^5.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache
import math

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import hermite

from .errors import SmoothnessError

__all__ = [
    "CURVATURE_FAMILIES",
    "TORSION_FAMILIES",
    "MAX_ORDER",
    "CurvatureProfile",
    "TorsionSpec",
    "AssumptionReport",
    "eval_profile",
    "eval_torsion",
    "validate_assumptions",
]

CURVATURE_FAMILIES = ("zero", "constant_bump", "gaussian", "sech2")
TORSION_FAMILIES = ("constant", "ramp_smoothed")
MAX_ORDER = 5


@lru_cache(maxsize=None)
def _tanh_poly(start: tuple, order: int) -> Polynomial:
    """Polynomial P_n with d^n/dx^n f(tanh x) = P_n(tanh x), f = P_0."""
    p = Polynomial(start)
    dt = Polynomial([1.0, 0.0, -1.0])  # d tanh/dx = 1 - tanh^2
    for _ in range(order):
        p = p.deriv() * dt
    return p


@lru_cache(maxsize=None)
def _smooth_step() -> Polynomial:
    # S' proportional to x^5 (1-x)^5, S(0) = 0, S(1) = 1
    x = Polynomial([0.0, 1.0])
    core = (x**5) * ((1 - x) ** 5)
    s = core.integ()
    return s / s(1.0)


@lru_cache(maxsize=None)
def _smooth_step_deriv(order: int) -> Polynomial:
    return _smooth_step().deriv(order) if order else _smooth_step()


def _hermite_coeffs(n: int) -> np.ndarray:
    c = np.zeros(n + 1)
    c[n] = 1.0
    return c


@dataclass(frozen=True)
class CurvatureProfile:
    """Signed curvature (2D) or first curvature (3D) as a closed-form family."""

    family: str = "zero"
    a: float = 0.0
    sigma: float = 1.0
    plateau: float = 0.0
    smoothness_class: int = MAX_ORDER

    def __post_init__(self):
        if self.family not in CURVATURE_FAMILIES:
            raise ValueError(f"unknown curvature family {self.family!r}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.plateau < 0:
            raise ValueError(f"plateau must be nonnegative, got {self.plateau}")
        if not 2 <= self.smoothness_class <= MAX_ORDER:
            raise ValueError(
                f"smoothness_class must lie in [2, {MAX_ORDER}], got {self.smoothness_class}"
            )

    @property
    def sup(self) -> float:
        """sup |gamma| over the real line."""
        return 0.0 if self.family == "zero" else abs(self.a)

    @property
    def is_trivial(self) -> bool:
        return self.family == "zero" or self.a == 0.0

    @property
    def support(self) -> tuple[float, float] | None:
        """Compact support interval, or None when the tails are only decaying."""
        if self.family == "zero":
            return (0.0, 0.0)
        if self.family == "constant_bump":
            r = self.plateau + self.sigma
            return (-r, r)
        return None

    def __call__(self, s, order: int = 0):
        return eval_profile(self, s, order)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CurvatureProfile":
        return cls(**d)


def eval_profile(p: CurvatureProfile, s, order: int = 0):
    """Evaluate the ``order``-th derivative of the profile at ``s``.

    ``s`` may be a scalar or an array; the result has the same shape.
    Raises SmoothnessError when ``order`` exceeds the declared smoothness.
    """
    if order < 0 or order > MAX_ORDER:
        raise SmoothnessError(f"derivative order {order} outside [0, {MAX_ORDER}]")
    if order > p.smoothness_class:
        raise SmoothnessError(
            f"order {order} exceeds declared smoothness class {p.smoothness_class} "
            f"of the {p.family} profile"
        )
    s_arr = np.asarray(s, dtype=float)
    if p.family == "zero":
        out = np.zeros_like(s_arr)
    elif p.family == "gaussian":
        x = s_arr / p.sigma
        # d^n/dx^n exp(-x^2) = (-1)^n H_n(x) exp(-x^2)
        out = (
            p.a
            * (-1.0) ** order
            * hermite.hermval(x, _hermite_coeffs(order))
            * np.exp(-x * x)
            / p.sigma**order
        )
    elif p.family == "sech2":
        t = np.tanh(s_arr / p.sigma)
        out = p.a * _tanh_poly((1.0, 0.0, -1.0), order)(t) / p.sigma**order
    else:
        out = _bump(p, s_arr, order)
    if np.ndim(s) == 0:
        return float(out)
    return out


def _bump(p: CurvatureProfile, s: np.ndarray, order: int) -> np.ndarray:
    w = p.sigma
    x = (np.abs(s) - p.plateau) / w
    out = np.zeros_like(x)
    ramp = (x > 0.0) & (x < 1.0)
    if order == 0:
        out[x <= 0.0] = p.a
        out[ramp] = p.a * (1.0 - _smooth_step()(x[ramp]))
    else:
        # d/ds |s| = sign(s); odd orders flip sign on the left branch
        sgn = np.where(s < 0.0, (-1.0) ** order, 1.0)
        out[ramp] = -p.a * sgn[ramp] * _smooth_step_deriv(order)(x[ramp]) / w**order
    return out


@dataclass(frozen=True)
class TorsionSpec:
    """Rotation angle theta of the Tang frame; the torsion is theta'.

    constant
        theta(s) = theta0.
    ramp_smoothed
        theta(s) = theta0 + delta * (1 + tanh(s / width)) / 2, moving
        monotonically from theta0 to theta0 + delta.
    """

    family: str = "constant"
    theta0: float = 0.0
    delta: float = 0.0
    width: float = 1.0
    bounded_rotation: bool = False

    def __post_init__(self):
        if self.family not in TORSION_FAMILIES:
            raise ValueError(f"unknown torsion family {self.family!r}")
        if not self.width > 0:
            raise ValueError(f"width must be positive, got {self.width}")
        if self.bounded_rotation:
            lo, hi = self.range
            if lo < 0.0 or hi > math.pi / 2:
                raise ValueError(
                    f"theta range [{lo}, {hi}] leaves [0, pi/2] while bounded_rotation is set"
                )

    @property
    def range(self) -> tuple[float, float]:
        if self.family == "constant":
            return (self.theta0, self.theta0)
        ends = (self.theta0, self.theta0 + self.delta)
        return (min(ends), max(ends))

    def theta(self, s, order: int = 0):
        return eval_torsion(self, s, order)

    def tau(self, s):
        return eval_torsion(self, s, 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TorsionSpec":
        return cls(**d)


def eval_torsion(t: TorsionSpec, s, order: int = 0):
    if order < 0 or order > MAX_ORDER:
        raise SmoothnessError(f"derivative order {order} outside [0, {MAX_ORDER}]")
    s_arr = np.asarray(s, dtype=float)
    if t.family == "constant":
        out = np.full_like(s_arr, t.theta0 if order == 0 else 0.0)
    else:
        th = np.tanh(s_arr / t.width)
        out = 0.5 * t.delta * _tanh_poly((0.0, 1.0), order)(th) / t.width**order
        if order == 0:
            out = out + t.theta0 + 0.5 * t.delta
    if np.ndim(s) == 0:
        return float(out)
    return out


@dataclass
class AssumptionReport:
    """Outcome of the standing-assumption checks; each flag is pure."""

    sup_gamma: float
    non_trivially_curved: bool
    half_width_bound_ok: bool
    decay_ok: bool
    tube_bound_ok: bool
    smoothness_ok: bool = True
    torsion_ok: bool = True
    notes: list[str] = field(default_factory=list)

    @property
    def geometry_ok(self) -> bool:
        """True when the straightening map is a valid change of variables."""
        return self.half_width_bound_ok and self.tube_bound_ok and self.decay_ok

    @property
    def ok(self) -> bool:
        return (
            self.geometry_ok
            and self.non_trivially_curved
            and self.smoothness_ok
            and self.torsion_ok
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def validate_assumptions(p: CurvatureProfile, g, need_smoothness: int = 2) -> AssumptionReport:
    """Check the standing assumptions of the profile ``p`` on guide ``g``.

    ``g`` is a GuideSpec.  ``need_smoothness`` is the derivative order the
    downstream pipeline relies on (2 for eigenpairs, 5 for the Poisson
    reconstruction theory); a shortfall is only noted, never enforced.
    """
    sup = p.sup
    notes = []
    nontrivial = not p.is_trivial
    if not nontrivial:
        notes.append("curvature vanishes identically: the guide is straight")

    if g.dim == 2:
        half = 0.5 * g.d
        half_ok = sup == 0.0 or half < 1.0 / sup
        tube_ok = half_ok
        if not half_ok:
            notes.append(
                f"half-width bound violated: d/2 = {half:g} >= 1/sup|gamma| = {1.0 / sup:g}"
            )
    else:
        a_omega = g.a_omega
        tube_ok = sup == 0.0 or a_omega * sup < 1.0
        half_ok = tube_ok
        if not tube_ok:
            notes.append(
                f"tube bound violated: a_omega * sup k = {a_omega * sup:g} >= 1"
            )

    # every family decays or is compactly supported; also flag a visibly
    # nonzero curvature at the truncation ends
    decay_ok = True
    edge = max(abs(eval_profile(p, -g.L)), abs(eval_profile(p, g.L)))
    if sup > 0 and edge > 1e-8 * sup:
        notes.append(f"curvature at s = +-L is {edge:.3g}; truncation may be too short")

    smooth_ok = p.smoothness_class >= need_smoothness
    if not smooth_ok:
        notes.append(
            f"pipeline needs derivatives up to order {need_smoothness}, "
            f"profile declares {p.smoothness_class}"
        )

    torsion_ok = True
    if g.dim == 3 and g.torsion is not None and g.torsion.bounded_rotation:
        lo, hi = g.torsion.range
        torsion_ok = 0.0 <= lo and hi <= math.pi / 2

    return AssumptionReport(
        sup_gamma=sup,
        non_trivially_curved=nontrivial,
        half_width_bound_ok=half_ok,
        decay_ok=decay_ok,
        tube_bound_ok=tube_ok,
        smoothness_ok=smooth_ok,
        torsion_ok=torsion_ok,
        notes=notes,
    )
