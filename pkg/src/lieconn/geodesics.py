"""Geodesics of a linear A-connection and the energy spray."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebroid import LieAlgebroid
from .connection import RiemannMetric
from .levi_civita import LeviCivitaConnection, SprayCoefficients
from .scalar_field import DomainError
from .transport import APath, admissibility_residual

__all__ = ["GeodesicResult", "SprayReport", "integrate_geodesic", "energy",
           "spray_vs_geodesic_check"]


def energy(g: RiemannMetric, x, y) -> float:
    """``g_ab(x) y^a y^b``."""
    y = np.asarray(y, dtype=float)
    if y.shape != (g.k,):
        raise ValueError(f"fiber vector must have length {g.k}")
    return float(y @ g.values(tuple(np.asarray(x, dtype=float))) @ y)


@dataclass
class GeodesicResult:
    path: APath
    energy: np.ndarray | None
    admissibility_residual: float
    truncated: bool = False
    reason: str = ""

    @property
    def energy_drift(self) -> float | None:
        """``max |E(t) - E(0)| / E(0)`` (absolute drift when ``E(0) = 0``)."""
        if self.energy is None:
            return None
        e0 = self.energy[0]
        drift = np.max(np.abs(self.energy - e0))
        return float(drift / e0) if e0 > 0 else float(drift)

    def to_dict(self) -> dict:
        return {
            "steps": int(self.path.n_steps),
            "T": float(self.path.t[-1]),
            "truncated": self.truncated,
            "reason": self.reason,
            "admissibility_residual": self.admissibility_residual,
            "energy_drift": self.energy_drift,
            "x_end": self.path.x[-1].tolist(),
            "y_end": self.path.y[-1].tolist(),
        }


def _rk4(field, x0, y0, T, N, inside):
    """Fixed-step RK4 for ``(x, y)' = field(x, y)``; stops at the last node inside the chart."""
    h = T / N
    xs, ys = [np.asarray(x0, dtype=float)], [np.asarray(y0, dtype=float)]
    reason = ""
    for _ in range(N):
        x, y = xs[-1], ys[-1]
        try:
            k1 = field(x, y)
            k2 = field(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1])
            k3 = field(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1])
            k4 = field(x + h * k3[0], y + h * k3[1])
        except DomainError as exc:
            reason = f"expression domain error: {exc}"
            break
        xn = x + (h / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        yn = y + (h / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not inside(xn):
            reason = f"left the chart box at t={len(xs) * h:.6g}"
            break
        xs.append(xn)
        ys.append(yn)
    return np.array(xs), np.array(ys), reason


def _result(A, g, xs, ys, T, N, reason):
    t = np.arange(len(xs)) * (T / N)
    if len(t) < 2:
        raise ValueError("geodesic leaves the chart immediately; " + reason)
    path = APath(t, xs, ys, meta={"kind": "geodesic"})
    path.admissibility_residual = admissibility_residual(A, path) if len(t) > 2 else 0.0
    en = np.array([energy(g, x, y) for x, y in zip(xs, ys)]) if g is not None else None
    return GeodesicResult(path, en, path.admissibility_residual, bool(reason), reason)


def integrate_geodesic(A: LieAlgebroid, D, x0, y0, T: float = 1.0, N: int = 1000, *,
                       g: RiemannMetric | None = None, clip_to_domain: bool = True) -> GeodesicResult:
    """Solve ``x' = rho(x) y``, ``y'^a = -Gamma^a_bc(x) y^b y^c`` with classical RK4.

    ``D`` is any linear connection (``coefficients(x)`` returning
    ``Gamma[a, b, c]``); only its part symmetric in ``(b, c)`` matters.
    Supplying ``g`` records the energy at every node.  The run stops at
    the last node inside ``A.domain`` and is flagged as truncated.
    """
    if N < 2:
        raise ValueError("need N >= 2")
    if not getattr(D, "linear", False) or D.k != A.m:
        raise ValueError("geodesics need a linear connection")
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if x0.shape != (A.n,) or y0.shape != (A.m,):
        raise ValueError("initial point has the wrong dimensions")
    if clip_to_domain and not A.in_domain(x0):
        raise ValueError(f"x0={x0.tolist()} is outside the chart box")

    def field(x, y):
        gam = D.coefficients(tuple(x))
        sym = 0.5 * (gam + gam.transpose(0, 2, 1))
        return A.anchor(tuple(x)) @ y, -np.einsum("abc,b,c->a", sym, y, y)

    inside = (lambda x: A.in_domain(x)) if clip_to_domain else (lambda x: True)
    xs, ys, reason = _rk4(field, x0, y0, T, N, inside)
    return _result(A, g, xs, ys, T, N, reason)


@dataclass
class SprayReport:
    max_distance: float
    geodesic: GeodesicResult
    spray: GeodesicResult

    def to_dict(self) -> dict:
        return {"max_distance": self.max_distance,
                "geodesic": self.geodesic.to_dict(), "spray": self.spray.to_dict()}


def spray_vs_geodesic_check(A: LieAlgebroid, g: RiemannMetric, x0, y0, T: float = 1.0,
                            N: int = 1000) -> SprayReport:
    """Integrate the Levi-Civita geodesic system and the energy spray flow and compare.

    The spray flow is ``x' = rho(x) y``, ``y' = -2 G(x, y)`` with ``G``
    computed from the energy Lagrangian, independently of the connection.
    """
    geo = integrate_geodesic(A, LeviCivitaConnection(A, g), x0, y0, T, N, g=g)
    spray = SprayCoefficients(A, g)

    def field(x, y):
        return A.anchor(tuple(x)) @ y, -2.0 * spray(tuple(x), y)

    xs, ys, reason = _rk4(field, np.asarray(x0, float), np.asarray(y0, float), T, N,
                          lambda x: A.in_domain(x))
    sp = _result(A, g, xs, ys, T, N, reason)
    k = min(len(geo.path.t), len(sp.path.t))
    d = np.concatenate([geo.path.x[:k] - sp.path.x[:k], geo.path.y[:k] - sp.path.y[:k]], axis=1)
    return SprayReport(float(np.max(np.abs(d), initial=0.0)), geo, sp)
