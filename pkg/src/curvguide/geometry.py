"""Curvilinear maps of the guide: reference curve, moving frames, metric.

In 2D the reference curve is recovered from its signed curvature by
integrating the tangent angle; the normal is the tangent rotated by +90
degrees, so that Gamma'' = gamma N and the Jacobian of
(s, u) -> Gamma(s) + u N(s) is 1 - u gamma(s).

In 3D the Frenet frame is propagated with a fourth-order Magnus integrator
(curvature k, torsion tau = theta'), which keeps the frame orthonormal to
rounding.  The Tang frame is the Frenet normal pair rotated by theta::

    e2~ = cos(theta) e2 - sin(theta) e3
    e3~ = sin(theta) e2 + cos(theta) e3

and the tube map is Gamma + u2 e2~ + u3 e3~, whose Jacobian is
h = 1 - k (cos(theta) u2 + sin(theta) u3).
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy.spatial import cKDTree

from .errors import AssumptionError
from .profiles import CurvatureProfile, TorsionSpec, eval_profile, eval_torsion

__all__ = [
    "GuideSpec",
    "FrameSample",
    "CurveFrames",
    "MetricSample",
    "reference_curve_2d",
    "reference_curve_3d",
    "map_to_guide",
    "metric_factor",
    "check_injectivity",
    "ResolutionWarning",
]

# max integration step; the curve is sampled exactly at the requested s
_H_MAX = 0.01
_GAUSS = (0.5 - math.sqrt(3.0) / 6.0, 0.5 + math.sqrt(3.0) / 6.0)


class ResolutionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GuideSpec:
    """Guide geometry: 2D strip of width d, or 3D tube with a d2 x d3 rectangle.

    The rectangle is a numerical stand-in for a smooth cross-section; it is
    centred at (0, 0).
    """

    dim: int = 2
    L: float = 15.0
    d: float = 1.0
    d2: float = 1.0
    d3: float = 1.0
    torsion: TorsionSpec | None = None

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        widths = (self.d,) if self.dim == 2 else (self.d2, self.d3)
        if min(widths) <= 0:
            raise ValueError(f"cross-section widths must be positive, got {widths}")
        if self.dim == 3 and self.torsion is None:
            object.__setattr__(self, "torsion", TorsionSpec())

    @property
    def widths(self) -> tuple[float, ...]:
        return (self.d,) if self.dim == 2 else (self.d2, self.d3)

    @property
    def a_omega(self) -> float:
        """Largest distance from the centreline to a cross-section point."""
        if self.dim == 2:
            return 0.5 * self.d
        return math.hypot(0.5 * self.d2, 0.5 * self.d3)


@dataclass(frozen=True)
class FrameSample:
    s: float
    Gamma: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray | None = None
    e2_tang: np.ndarray | None = None
    e3_tang: np.ndarray | None = None
    theta: float = 0.0


@dataclass
class CurveFrames:
    """Reference curve and frames sampled at ``s`` (arrays, one row per s).

    In 2D ``theta`` is the tangent angle and ``e2`` the normal N; in 3D
    ``theta`` is the Tang rotation angle.
    """

    s: np.ndarray
    Gamma: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    theta: np.ndarray
    e3: np.ndarray | None = None
    e2_tang: np.ndarray | None = None
    e3_tang: np.ndarray | None = None

    def __len__(self):
        return len(self.s)

    def __getitem__(self, i) -> FrameSample:
        opt = lambda a: None if a is None else a[i]  # noqa: E731
        return FrameSample(
            s=float(self.s[i]),
            Gamma=self.Gamma[i],
            e1=self.e1[i],
            e2=self.e2[i],
            e3=opt(self.e3),
            e2_tang=opt(self.e2_tang),
            e3_tang=opt(self.e3_tang),
            theta=float(self.theta[i]),
        )


@dataclass
class MetricSample:
    jacobian: np.ndarray
    ds_h: np.ndarray
    ds2_h: np.ndarray


def _march(s_targets, h_max, step, y0):
    """Integrate outward from s = 0 with steps <= h_max, hitting every target.

    ``step(s, h, y)`` advances the state ``y`` from s to s + h.  Returns the
    state at each target, in the order given.
    """
    s_targets = np.asarray(s_targets, dtype=float)
    out = [None] * len(s_targets)
    order = np.argsort(s_targets, kind="stable")
    pos = [i for i in order if s_targets[i] >= 0.0]
    neg = [i for i in order[::-1] if s_targets[i] < 0.0]
    for branch in (pos, neg):
        s_cur, y = 0.0, y0
        for i in branch:
            target = s_targets[i]
            span = target - s_cur
            n = max(1, int(math.ceil(abs(span) / h_max))) if span != 0.0 else 0
            for k in range(n):
                # recompute from the anchor to avoid accumulating step drift
                s_next = s_cur + span * (k + 1) / n
                s_prev = s_cur + span * k / n
                y = step(s_prev, s_next - s_prev, y)
            s_cur = target
            out[i] = y
    return out


def _check_resolution(s, sup, h):
    if sup * h > 0.25:
        warnings.warn(
            f"integration step {h:g} is coarse for curvature up to {sup:g}",
            ResolutionWarning,
            stacklevel=3,
        )


def reference_curve_2d(p: CurvatureProfile, s_samples, h_max: float = _H_MAX) -> CurveFrames:
    """Reconstruct Gamma from its signed curvature, Gamma(0) = 0, angle(0) = 0.

    The tangent angle is integrated with two-point Gauss quadrature per step
    and the position with Simpson's rule on the unit tangent; both are
    fourth-order, and the tangent stays exactly unit length.
    """
    s = np.asarray(s_samples, dtype=float).ravel()
    _check_resolution(s, p.sup, h_max)

    def angle_incr(s0, h):
        return 0.5 * h * (eval_profile(p, s0 + _GAUSS[0] * h) + eval_profile(p, s0 + _GAUSS[1] * h))

    def step(s0, h, y):
        th, x, yy = y
        th_mid = th + angle_incr(s0, 0.5 * h)
        th_end = th + angle_incr(s0, h)
        x += h / 6.0 * (math.cos(th) + 4.0 * math.cos(th_mid) + math.cos(th_end))
        yy += h / 6.0 * (math.sin(th) + 4.0 * math.sin(th_mid) + math.sin(th_end))
        return (th_end, x, yy)

    states = _march(s, h_max, step, (0.0, 0.0, 0.0))
    theta = np.array([y[0] for y in states])
    Gamma = np.array([[y[1], y[2]] for y in states]).reshape(-1, 2)
    e1 = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    e2 = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    return CurveFrames(s=s, Gamma=Gamma, e1=e1, e2=e2, theta=theta)


def _skew(k, tau):
    # rows of the frame evolve as F' = K F
    return np.array([[0.0, k, 0.0], [-k, 0.0, tau], [0.0, -tau, 0.0]])


def _expm_skew(K):
    w = math.sqrt(K[0, 1] ** 2 + K[0, 2] ** 2 + K[1, 2] ** 2)
    if w < 1e-300:
        return np.eye(3)
    K2 = K @ K
    if w < 1e-4:
        a = 1.0 - w * w / 6.0
        b = 0.5 - w * w / 24.0
    else:
        a = math.sin(w) / w
        b = (1.0 - math.cos(w)) / (w * w)
    return np.eye(3) + a * K + b * K2


def reference_curve_3d(
    k: CurvatureProfile, torsion: TorsionSpec, s_samples, h_max: float = _H_MAX
) -> CurveFrames:
    """Frenet curve with curvature ``k`` and torsion theta', plus the Tang frame.

    Initial frame is the identity at s = 0 with Gamma(0) = 0.
    """
    s = np.asarray(s_samples, dtype=float).ravel()
    _check_resolution(s, k.sup, h_max)

    def K(si):
        return _skew(eval_profile(k, si), eval_torsion(torsion, si, 1))

    def magnus(s0, h, F):
        K1 = K(s0 + _GAUSS[0] * h)
        K2 = K(s0 + _GAUSS[1] * h)
        Om = 0.5 * h * (K1 + K2) + (math.sqrt(3.0) / 12.0) * h * h * (K2 @ K1 - K1 @ K2)
        return _expm_skew(Om) @ F

    def step(s0, h, y):
        G, F = y
        F_mid = magnus(s0, 0.5 * h, F)
        F_end = magnus(s0, h, F)
        G = G + h / 6.0 * (F[0] + 4.0 * F_mid[0] + F_end[0])
        return (G, F_end)

    states = _march(s, h_max, step, (np.zeros(3), np.eye(3)))
    Gamma = np.array([y[0] for y in states]).reshape(-1, 3)
    frames = np.array([y[1] for y in states]).reshape(-1, 3, 3)
    e1, e2, e3 = frames[:, 0], frames[:, 1], frames[:, 2]
    th = np.asarray(eval_torsion(torsion, s), dtype=float).reshape(-1)
    c, sn = np.cos(th)[:, None], np.sin(th)[:, None]
    return CurveFrames(
        s=s,
        Gamma=Gamma,
        e1=e1,
        e2=e2,
        e3=e3,
        e2_tang=c * e2 - sn * e3,
        e3_tang=sn * e2 + c * e3,
        theta=th,
    )


def _inside(spec: GuideSpec, u) -> bool:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if spec.dim == 2:
        return bool(np.all(np.abs(u) < 0.5 * spec.d))
    u = u.reshape(-1, 2)
    return bool(np.all((np.abs(u[:, 0]) < 0.5 * spec.d2) & (np.abs(u[:, 1]) < 0.5 * spec.d3)))


def map_to_guide(spec: GuideSpec, p: CurvatureProfile, s, u, curve: CurveFrames | None = None):
    """Physical point of straightened coordinates (s, u).

    2D: Gamma(s) + u N(s).  3D: ``u = (u2, u3)`` and the point is
    Gamma(s) + u2 e2~(s) + u3 e3~(s).  ``s`` may be an array, with ``u``
    broadcast against it.  A precomputed ``curve`` sampled at ``s`` skips
    the integration.
    """
    scalar = np.ndim(s) == 0
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if not _inside(spec, u):
        raise ValueError(f"u = {u!r} lies outside the cross-section {spec.widths}")
    if curve is None:
        if spec.dim == 2:
            curve = reference_curve_2d(p, s_arr)
        else:
            curve = reference_curve_3d(p, spec.torsion, s_arr)
    if spec.dim == 2:
        u_arr = np.broadcast_to(np.asarray(u, dtype=float), s_arr.shape)
        pts = curve.Gamma + u_arr[:, None] * curve.e2
    else:
        u_arr = np.broadcast_to(np.asarray(u, dtype=float), s_arr.shape + (2,))
        pts = curve.Gamma + u_arr[:, :1] * curve.e2_tang + u_arr[:, 1:] * curve.e3_tang
    return pts[0] if scalar else pts


def metric_factor(spec: GuideSpec, p: CurvatureProfile, s, u, check: bool = True) -> MetricSample:
    """Jacobian of the straightening map and its first two s-derivatives.

    2D: 1 - u gamma(s).  3D (``u = (u2, u3)``):
    h = 1 - k(s) q(s) with q = cos(theta) u2 + sin(theta) u3.
    Raises AssumptionError if the Jacobian is not positive somewhere.
    """
    s = np.asarray(s, dtype=float)
    if spec.dim == 2:
        u = np.asarray(u, dtype=float)
        jac = 1.0 - u * eval_profile(p, s)
        ds = -u * eval_profile(p, s, 1)
        ds2 = -u * eval_profile(p, s, 2)
    else:
        u2, u3 = (np.asarray(v, dtype=float) for v in u)
        t = spec.torsion
        th, th1, th2 = (eval_torsion(t, s, n) for n in range(3))
        k0, k1, k2 = (eval_profile(p, s, n) for n in range(3))
        c, sn = np.cos(th), np.sin(th)
        q = c * u2 + sn * u3
        r = -sn * u2 + c * u3  # dq/dtheta
        q1 = th1 * r
        q2 = th2 * r - th1 * th1 * q
        jac = 1.0 - k0 * q
        ds = -(k1 * q + k0 * q1)
        ds2 = -(k2 * q + 2.0 * k1 * q1 + k0 * q2)
    if check and np.any(np.asarray(jac) <= 0.0):
        raise AssumptionError(
            "nonpositive Jacobian: the cross-section reaches the curvature radius",
            code="nonpositive_metric",
        )
    return MetricSample(jacobian=jac, ds_h=ds, ds2_h=ds2)


def _section_points(spec: GuideSpec, n_edge: int) -> np.ndarray:
    if spec.dim == 2:
        return np.linspace(-0.5 * spec.d, 0.5 * spec.d, n_edge)
    a, b = 0.5 * spec.d2, 0.5 * spec.d3
    t = np.linspace(-1.0, 1.0, n_edge)
    edges = [
        np.stack([a * t, np.full_like(t, -b)], axis=1),
        np.stack([a * t, np.full_like(t, b)], axis=1),
        np.stack([np.full_like(t, -a), b * t], axis=1),
        np.stack([np.full_like(t, a), b * t], axis=1),
    ]
    return np.unique(np.concatenate(edges), axis=0)


def check_injectivity(
    spec: GuideSpec, p: CurvatureProfile, sample_density: float = 20.0, n_edge: int = 11
) -> tuple[bool, float]:
    """Sampling heuristic for self-overlap of the truncated guide.

    Cross-sections are sampled every 1/sample_density along [-L, L].  Only
    pairs of sections more than 2 * a_omega apart in arclength are compared,
    and only distances below a_omega * 2 are looked at; the smallest such
    distance is returned (``inf`` when none is found).  The guide is flagged
    as overlapping when that distance drops below a_omega / 5 (d/10 in 2D).
    Not a proof of injectivity.
    """
    n_s = max(2, int(math.ceil(2.0 * spec.L * sample_density)) + 1)
    s = np.linspace(-spec.L, spec.L, n_s)
    if spec.dim == 2:
        curve = reference_curve_2d(p, s)
    else:
        curve = reference_curve_3d(p, spec.torsion, s)
    sec = _section_points(spec, n_edge)
    m = len(sec)
    if spec.dim == 2:
        pts = curve.Gamma[:, None, :] + sec[None, :, None] * curve.e2[:, None, :]
    else:
        pts = (
            curve.Gamma[:, None, :]
            + sec[None, :, 0:1] * curve.e2_tang[:, None, :]
            + sec[None, :, 1:2] * curve.e3_tang[:, None, :]
        )
    pts = pts.reshape(n_s * m, spec.dim)
    owner = np.repeat(s, m)
    a = spec.a_omega
    tree = cKDTree(pts)
    pairs = tree.query_pairs(2.0 * a, output_type="ndarray")
    best = math.inf
    if len(pairs):
        far = np.abs(owner[pairs[:, 0]] - owner[pairs[:, 1]]) > 2.0 * a
        if np.any(far):
            sel = pairs[far]
            dist = np.linalg.norm(pts[sel[:, 0]] - pts[sel[:, 1]], axis=1)
            best = float(dist.min())
    return best >= 0.2 * a, best
