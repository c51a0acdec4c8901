"""A-paths, parallel transport and the covariant derivative along a path.

Paths are stored discretized on a time grid.  Paths built from closed-form
curves also keep exact evaluators (``segments``) so the fixed-step RK4
integrator can sample midpoints without interpolation error; other paths
fall back to cubic-spline interpolation of the stored samples.
"""
from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .algebroid import LieAlgebroid, _coords

__all__ = [
    "APath", "AlphaSection", "TransportMap", "LimitReport",
    "NotLiftableError", "NotVerticalError",
    "make_vertical_path", "lift_base_path", "admissibility_residual", "check_admissible",
    "parallel_transport", "transport_map", "transport_matrices",
    "covariant_derivative_along", "transport_limit_check",
    "segment_curve", "circle_curve", "rectangle_curve", "alpha_section",
]

PINV_RCOND = 1e-10
LIFT_TOL = 1e-6


class NotLiftableError(ValueError):
    def __init__(self, message, node=None, t=None, residual=None):
        self.node, self.t, self.residual = node, t, residual
        super().__init__(message)


class NotVerticalError(ValueError):
    def __init__(self, message, t=None, residual=None):
        self.t, self.residual = t, residual
        super().__init__(message)


@dataclass(frozen=True)
class Segment:
    t0: float
    t1: float
    fn: object  # t -> (x, y), exact


@dataclass
class APath:
    """Discretized curve ``t -> (x(t), y(t))`` in the algebroid."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    admissibility_residual: float = 0.0
    vertical: bool = False
    segments: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float).reshape(len(self.t), -1)
        self.y = np.asarray(self.y, dtype=float).reshape(len(self.t), -1)
        if len(self.t) < 2 or np.any(np.diff(self.t) <= 0):
            raise ValueError("path time grid must be strictly increasing with >= 2 nodes")
        self._splines = None
        self._seg_starts = [s.t0 for s in self.segments]

    @property
    def n_steps(self) -> int:
        return len(self.t) - 1

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def _segment_for_step(self, j):
        mid = 0.5 * (self.t[j] + self.t[j + 1])
        return self.segments[max(bisect.bisect_right(self._seg_starts, mid) - 1, 0)]

    def state(self, j: int, t: float):
        """``(x, y)`` at time ``t`` inside step ``j`` (``t_j <= t <= t_{j+1}``)."""
        if self.segments:
            seg = self._segment_for_step(j)
            xv, yv = seg.fn(t)
            return np.asarray(xv, dtype=float), np.asarray(yv, dtype=float)
        if t == self.t[j]:
            return self.x[j], self.y[j]
        if t == self.t[j + 1]:
            return self.x[j + 1], self.y[j + 1]
        if self._splines is None:
            self._splines = (CubicSpline(self.t, self.x, axis=0) if self.x.shape[1] else None,
                             CubicSpline(self.t, self.y, axis=0))
        sx, sy = self._splines
        xv = sx(t) if sx is not None else np.zeros(0)
        return np.asarray(xv), np.asarray(sy(t))

    def same_segment(self, j: int) -> bool:
        """Whether steps ``j`` and ``j + 1`` are evaluated by the same segment."""
        if not self.segments or j + 1 >= self.n_steps:
            return True
        return self._segment_for_step(j) is self._segment_for_step(j + 1)

    def reversed(self) -> "APath":
        """The reverse path ``t -> (x(T - t), -y(T - t))``."""
        t0, t1 = self.t[0], self.t[-1]
        t = (t0 + t1) - self.t[::-1]
        segs = tuple(
            Segment(t0 + t1 - s.t1, t0 + t1 - s.t0, _reverse_fn(s.fn, t0 + t1))
            for s in reversed(self.segments)
        )
        meta = dict(self.meta, reversed=not self.meta.get("reversed", False))
        return APath(t, self.x[::-1].copy(), -self.y[::-1], self.admissibility_residual,
                     self.vertical, segs, meta)

    def then(self, other: "APath") -> "APath":
        """Concatenation: this path followed by ``other`` (time-shifted)."""
        if np.max(np.abs(self.x[-1] - other.x[0]), initial=0.0) > 1e-10:
            raise ValueError("paths do not join: end point differs from start point")
        shift = self.t[-1] - other.t[0]
        t = np.concatenate([self.t, other.t[1:] + shift])
        x = np.concatenate([self.x, other.x[1:]])
        y = np.concatenate([self.y, other.y[1:]])
        segs = ()
        if self.segments and other.segments:
            segs = self.segments + tuple(
                Segment(s.t0 + shift, s.t1 + shift, _shift_fn(s.fn, shift)) for s in other.segments
            )
        return APath(t, x, y, max(self.admissibility_residual, other.admissibility_residual),
                     self.vertical and other.vertical, segs,
                     {"concatenation": [self.meta, other.meta]})

    def to_csv(self, z: np.ndarray | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n, m = self.x.shape[1], self.y.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{a + 1}" for a in range(m)]
        if z is not None:
            header += [f"z{b + 1}" for b in range(z.shape[1])]
        w.writerow(header)
        for j in range(len(self.t)):
            row = [self.t[j], *self.x[j], *self.y[j]]
            if z is not None:
                row += list(z[j])
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _reverse_fn(fn, total):
    def rev(t):
        xv, yv = fn(total - t)
        return xv, -np.asarray(yv, dtype=float)
    return rev


def _shift_fn(fn, shift):
    return lambda t: fn(t - shift)


@dataclass
class AlphaSection:
    """Fiber values ``z(t_j)`` of a section along a path's grid."""

    t: np.ndarray
    z: np.ndarray


@dataclass
class TransportMap:
    """Parallel displacement ``F_{gamma(0)} -> F_{gamma(T)}`` in the local basis."""

    matrix: np.ndarray
    start: np.ndarray
    end: np.ndarray

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))


def _grid(T, N):
    if N < 1:
        raise ValueError("need at least one step")
    return np.linspace(0.0, float(T), int(N) + 1)


# ---------------------------------------------------------------------------
# curve families (base curve, base velocity)


def segment_curve(p, q, T=1.0):
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    d = (q - p) / T
    return (lambda t: p + d * t), (lambda t: d)


def circle_curve(center, radius=1.0, T=2 * np.pi, axes=(0, 1)):
    c = np.asarray(center, dtype=float)
    w = 2 * np.pi / T
    i, j = axes

    def base(t):
        x = c.copy()
        x[i] += radius * np.cos(w * t)
        x[j] += radius * np.sin(w * t)
        return x

    def vel(t):
        v = np.zeros_like(c)
        v[i] = -radius * w * np.sin(w * t)
        v[j] = radius * w * np.cos(w * t)
        return v

    return base, vel


def rectangle_curve(x0, i, j, side_i, side_j, T=1.0):
    """Counter-clockwise rectangle in the ``(i, j)`` coordinate plane.

    Each side takes a quarter of the time with a smooth-stop profile, so the
    velocity vanishes at the corners and the curve is continuously
    differentiable.
    """
    x0 = np.asarray(x0, dtype=float)
    ei = np.zeros_like(x0)
    ej = np.zeros_like(x0)
    ei[i], ej[j] = side_i, side_j
    corners = [x0, x0 + ei, x0 + ei + ej, x0 + ej, x0]

    def _locate(t):
        u = 4.0 * t / T
        k = min(int(u), 3)
        return k, u - k

    def base(t):
        k, u = _locate(t)
        phi = u - np.sin(2 * np.pi * u) / (2 * np.pi)
        return corners[k] + phi * (corners[k + 1] - corners[k])

    def vel(t):
        k, u = _locate(t)
        dphi = 1.0 - np.cos(2 * np.pi * u)
        return (4.0 / T) * dphi * (corners[k + 1] - corners[k])

    return base, vel


# ---------------------------------------------------------------------------
# path construction


def make_vertical_path(A: LieAlgebroid, x0, y, N: int, T: float = 1.0,
                       tol: float = 1e-10) -> APath:
    """Vertical A-path at ``x0`` with fiber curve ``y(t)`` in ``ker rho(x0)``."""
    x0 = np.asarray(_coords(x0), dtype=float)
    t = _grid(T, N)
    rho = A.anchor(x0)
    probe = np.union1d(t, 0.5 * (t[1:] + t[:-1]))
    worst, worst_t = 0.0, None
    for tj in probe:
        yv = np.asarray(y(tj), dtype=float)
        r = float(np.max(np.abs(rho @ yv), initial=0.0)) / max(1.0, float(np.max(np.abs(yv))))
        if r > worst:
            worst, worst_t = r, tj
    if worst > tol:
        raise NotVerticalError(
            f"fiber curve leaves ker rho(x0): residual {worst:.3g} at t={worst_t:.6g}",
            worst_t, worst,
        )
    ys = np.array([np.asarray(y(tj), dtype=float) for tj in t]).reshape(len(t), A.m)
    xs = np.tile(x0, (len(t), 1))

    def fn(tt):
        return x0, np.asarray(y(tt), dtype=float)

    return APath(t, xs, ys, worst, True, (Segment(0.0, float(T), fn),),
                 {"kind": "vertical", "x0": x0.tolist()})


def _lift_velocity(A, x, v):
    rho = A.anchor(x)
    if rho.size == 0:
        return np.zeros(A.m), float(np.max(np.abs(v), initial=0.0))
    y = np.linalg.pinv(rho, rcond=PINV_RCOND) @ v
    return y, float(np.max(np.abs(rho @ y - v), initial=0.0))


def lift_base_path(A: LieAlgebroid, base, N: int, T: float = 1.0, *, velocity=None,
                   tol: float = LIFT_TOL) -> APath:
    """Minimal-norm lift of a base curve: ``y = pinv(rho(x)) dx/dt`` at every node.

    Without an explicit ``velocity`` the base derivative is taken by central
    differences.  Raises :class:`NotLiftableError` when the anchor cannot
    realize the base velocity at some node.
    """
    t = _grid(T, N)
    if velocity is None:
        h = 6e-6 * max(1.0, abs(T))

        def velocity(tt):
            return (np.asarray(base(tt + h), dtype=float) - np.asarray(base(tt - h), dtype=float)) / (2 * h)

    xs = np.array([np.asarray(base(tj), dtype=float) for tj in t]).reshape(len(t), A.n)
    ys = np.empty((len(t), A.m))
    worst, worst_j = 0.0, 0
    for j, tj in enumerate(t):
        ys[j], r = _lift_velocity(A, xs[j], np.asarray(velocity(tj), dtype=float))
        if r > worst:
            worst, worst_j = r, j
    if worst > tol:
        raise NotLiftableError(
            f"anchor cannot realize the base velocity: residual {worst:.3g} at node "
            f"{worst_j} (t={t[worst_j]:.6g}, x={xs[worst_j].tolist()})",
            worst_j, float(t[worst_j]), worst,
        )

    def fn(tt):
        xv = np.asarray(base(tt), dtype=float)
        yv, _ = _lift_velocity(A, xv, np.asarray(velocity(tt), dtype=float))
        return xv, yv

    return APath(t, xs, ys, worst, False, (Segment(0.0, float(T), fn),), {"kind": "lift"})


def admissibility_residual(A: LieAlgebroid, path: APath) -> float:
    """``max |rho(x) y - dx/dt|`` on the grid, with 2nd-order centered differences."""
    if path.x.shape[1] == 0:
        return 0.0
    dxdt = np.gradient(path.x, path.t, axis=0, edge_order=2)
    res = 0.0
    for j in range(len(path.t)):
        res = max(res, float(np.max(np.abs(A.anchor(path.x[j]) @ path.y[j] - dxdt[j]))))
    return res


def check_admissible(A: LieAlgebroid, path: APath, tol: float = LIFT_TOL) -> bool:
    return admissibility_residual(A, path) <= tol


def alpha_section(path: APath, z) -> AlphaSection:
    """Sample ``z(t)`` on the path grid."""
    return AlphaSection(path.t.copy(), np.array([np.asarray(z(tj), dtype=float) for tj in path.t]))


# ---------------------------------------------------------------------------
# transport


def _transport_operator(D, x, y):
    """``M[beta, alpha] = Gamma^beta_{alpha a}(x) y^a``."""
    return D.coefficients(x) @ y


def transport_matrices(D, A: LieAlgebroid, path: APath, Z0=None) -> np.ndarray:
    """RK4 solution of ``dZ/dt = -M(t) Z`` on the path grid.

    ``Z0`` defaults to the identity, giving the fundamental matrix at every
    node (shape ``(N + 1, k, k)``).
    """
    if D.m != A.m or path.y.shape[1] != A.m:
        raise ValueError("connection, algebroid and path dimensions disagree")
    Z = np.eye(D.k) if Z0 is None else np.asarray(Z0, dtype=float)
    out = np.empty((len(path.t),) + Z.shape)
    out[0] = Z
    cache = {}

    def op(x, y):
        if path.vertical:
            key = "x0"
            if key not in cache:
                cache[key] = D.coefficients(x)
            return cache[key] @ y
        return _transport_operator(D, x, y)

    t = path.t
    M0 = op(*path.state(0, t[0]))
    for j in range(path.n_steps):
        h = t[j + 1] - t[j]
        Mm = op(*path.state(j, t[j] + 0.5 * h))
        M1 = op(*path.state(j, t[j + 1]))
        k1 = -M0 @ Z
        k2 = -Mm @ (Z + 0.5 * h * k1)
        k3 = -Mm @ (Z + 0.5 * h * k2)
        k4 = -M1 @ (Z + h * k3)
        Z = Z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[j + 1] = Z
        M0 = M1 if path.same_segment(j) else op(*path.state(j + 1, t[j + 1]))
    return out


def parallel_transport(D, A: LieAlgebroid, path: APath, z0) -> AlphaSection:
    """Parallel alpha-section with ``z(0) = z0`` (classical RK4 on the path grid)."""
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (D.k,):
        raise ValueError(f"initial vector must have length {D.k}")
    return AlphaSection(path.t.copy(), transport_matrices(D, A, path, z0))


def transport_map(D, A: LieAlgebroid, path: APath) -> TransportMap:
    Phi = transport_matrices(D, A, path)
    return TransportMap(Phi[-1], path.x[0].copy(), path.x[-1].copy())


def covariant_derivative_along(D, A: LieAlgebroid, path: APath, sigma: AlphaSection) -> AlphaSection:
    """``dz/dt + Gamma(x(t)) z y`` on the grid (centered differences, 2nd order at the ends)."""
    if sigma.z.shape[0] != len(path.t) or not np.allclose(sigma.t, path.t, rtol=0, atol=1e-12):
        raise ValueError("alpha-section grid does not match the path grid")
    dz = np.gradient(sigma.z, path.t, axis=0, edge_order=2)
    out = np.empty_like(dz)
    for j in range(len(path.t)):
        out[j] = dz[j] + _transport_operator(D, path.x[j], path.y[j]) @ sigma.z[j]
    return AlphaSection(path.t.copy(), out)


@dataclass
class LimitReport:
    ts: np.ndarray
    quotients: np.ndarray
    target: np.ndarray
    errors: np.ndarray
    order: float
    exact: bool

    @property
    def passed(self) -> bool:
        return self.exact or self.order >= 0.9


def transport_limit_check(D, A: LieAlgebroid, path: APath, sigma: AlphaSection,
                          target=None, divisors=(8, 16, 32, 64)) -> LimitReport:
    """Difference quotients ``((P^t)^{-1} sigma(t) - sigma(0)) / t`` as ``t -> 0``.

    The quotients are compared with ``target`` (default: the covariant
    derivative along the path at ``t = 0``) and a convergence order is
    fitted on a log-log scale.  Every ``T / d`` must be a grid node.
    """
    T = path.t[-1] - path.t[0]
    idx = []
    for d in divisors:
        j = int(np.argmin(np.abs(path.t - (path.t[0] + T / d))))
        if abs(path.t[j] - path.t[0] - T / d) > 1e-9 * max(1.0, T):
            raise ValueError(f"T/{d} is not a grid node; use a step count divisible by {d}")
        idx.append(j)
    Phi = transport_matrices(D, A, path)
    if target is None:
        target = covariant_derivative_along(D, A, path, sigma).z[0]
    target = np.asarray(target, dtype=float)
    ts, qs = [], []
    for j in idx:
        assert abs(np.linalg.det(Phi[j])) > 0, "singular transport map"
        w = np.linalg.solve(Phi[j], sigma.z[j])
        tj = path.t[j] - path.t[0]
        ts.append(tj)
        qs.append((w - sigma.z[0]) / tj)
    ts, qs = np.array(ts), np.array(qs)
    errs = np.linalg.norm(qs - target, axis=1)
    scale = max(1.0, float(np.max(np.abs(target), initial=0.0)))
    exact = bool(np.all(errs <= 1e-12 * scale))
    order = np.inf if exact else float(np.polyfit(np.log(ts), np.log(np.maximum(errs, 1e-300)), 1)[0])
    return LimitReport(ts, qs, target, errs, order, exact)
