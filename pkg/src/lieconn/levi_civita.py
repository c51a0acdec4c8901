"""Levi-Civita connection of a fiber metric and the energy spray."""
from __future__ import annotations

import numpy as np

from .algebroid import LieAlgebroid, _coords
from .connection import RiemannMetric
from .scalar_field import BinOp, Expr, Num, Var

__all__ = [
    "SingularMetricError", "RegularityError", "LeviCivitaConnection",
    "levi_civita_coeffs", "energy_lagrangian", "semispray_coeffs",
    "SprayCoefficients",
]


class SingularMetricError(np.linalg.LinAlgError):
    def __init__(self, x, detail=""):
        self.point = np.asarray(x, dtype=float)
        super().__init__(f"metric matrix is singular at x={self.point.tolist()} {detail}".strip())


class RegularityError(np.linalg.LinAlgError):
    pass


def _solve(g, rhs, x):
    try:
        cond = np.linalg.cond(g)
        if not np.isfinite(cond) or cond > 1e14:
            raise SingularMetricError(x, f"(condition number {cond:.3g})")
        return np.linalg.solve(g, rhs)
    except np.linalg.LinAlgError as exc:
        if isinstance(exc, SingularMetricError):
            raise
        raise SingularMetricError(x) from exc


def _koszul_rhs(rho, dg, gv, L):
    """``B[d, b, c]`` so that ``Gamma^a_bc = 1/2 g^{ad} B[d, b, c]``.

    ``dg[b, c, i] = d_i g_bc`` and ``L[e, d, c] = L^e_dc``.
    """
    Dg = np.moveaxis(dg @ rho, -1, 0)  # Dg[a, b, c] = rho_a^i d_i g_bc
    B = (
        np.einsum("bcd->dbc", Dg)  # rho_b^i d_i g_cd
        + np.einsum("cbd->dbc", Dg)  # rho_c^i d_i g_bd
        - Dg  # rho_d^i d_i g_bc
        + np.einsum("edc,eb->dbc", L, gv)
        + np.einsum("edb,ec->dbc", L, gv)
        - np.einsum("ebc,ed->dbc", L, gv)
    )
    return B


class LeviCivitaConnection:
    """The unique torsion-free linear connection compatible with ``g``.

    Coefficients are computed pointwise; derivatives of the coefficients
    (needed for curvature) come from exact second derivatives of ``g``.
    """

    linear = True

    def __init__(self, A: LieAlgebroid, g: RiemannMetric, *, name: str = ""):
        if g.k != A.m or g.n != A.n:
            raise ValueError("Levi-Civita connection needs a metric on the algebroid itself")
        self.A = A
        self.g = g
        self.n, self.m, self.k = A.n, A.m, A.m
        self.name = name or f"levi-civita({A.name})"

    def __repr__(self):
        return f"LeviCivitaConnection({self.A.name!r})"

    def coefficients(self, x) -> np.ndarray:
        x = _coords(x)
        gv, dg = self.g.jet(x)
        B = _koszul_rhs(self.A.anchor(x), dg, gv, self.A.structure(x))
        m = self.m
        return 0.5 * _solve(gv, B.reshape(m, m * m), x).reshape(m, m, m)

    def coefficient_jet(self, x):
        x = _coords(x)
        n, m = self.n, self.m
        gv, dg, d2g = self.g.jet2(x)
        rho, drho = self.A.anchor_jet(x)
        L, dL = self.A.structure_jet(x)
        B = _koszul_rhs(rho, dg, gv, L)
        gamma = 0.5 * _solve(gv, B.reshape(m, m * m), x).reshape(m, m, m)
        dgamma = np.zeros((m, m, m, n))
        for j in range(n):
            # product rule through every factor of the Koszul expression
            dB = (_koszul_rhs(drho[:, :, j], dg, gv * 0.0, L * 0.0)
                  + _koszul_rhs(rho, d2g[..., j], gv, dL[..., j])
                  + _koszul_rhs(rho * 0.0, dg * 0.0, dg[..., j], L))
            rhs = 0.5 * dB - np.einsum("ad,dbc->abc", dg[..., j], gamma)
            dgamma[..., j] = _solve(gv, rhs.reshape(m, m * m), x).reshape(m, m, m)
        return gamma, dgamma


def levi_civita_coeffs(A: LieAlgebroid, g: RiemannMetric, p) -> np.ndarray:
    """``Gamma[a, b, c] = Gamma^a_bc`` of the Levi-Civita connection at ``p``."""
    return LeviCivitaConnection(A, g).coefficients(p)


# ---------------------------------------------------------------------------
# sprays


def energy_lagrangian(g: RiemannMetric, m: int | None = None) -> Expr:
    """``E(x, y) = g_ab(x) y^a y^b`` as an expression in ``x`` and ``y``."""
    k = g.k
    root = None
    for a in range(k):
        for b in range(a, k):
            e = g[a, b]
            if e.is_constant and e.root.value == 0:
                continue
            term = BinOp("*", BinOp("*", e.root, Var("y", a)), Var("y", b))
            if a != b:
                term = BinOp("*", Num(2.0), term)
            root = term if root is None else BinOp("+", root, term)
    return Expr(root if root is not None else Num(0.0), g.n, k if m is None else m)


def _lagrangian_derivatives(lag: Expr, x, y):
    n, m = len(x), len(y)
    dLdx = np.array([lag.partial(i, x, y) for i in range(n)])
    dLdy = np.array([lag.partial(c, x, y, wrt="y") for c in range(m)])
    mixed = np.array([[lag.second_partial(b, i, x, y, wrt=("y", "x")) for i in range(n)]
                      for b in range(m)]).reshape(m, n)
    return dLdx, dLdy, mixed


def _lagrangian_hessian(lag: Expr, x, y):
    m = len(y)
    H = np.empty((m, m))
    for a in range(m):
        for b in range(a, m):
            H[a, b] = H[b, a] = lag.second_partial(a, b, x, y, wrt=("y", "y"))
    return H


def semispray_coeffs(A: LieAlgebroid, lag: Expr, p, y, *, hessian=None) -> np.ndarray:
    """Semispray coefficients ``G^a_L(x, y)`` of a regular Lagrangian.

    ``G^a = 1/4 g^{ab} (d2L/dy^b dx^i rho_c^i y^c - rho_b^i dL/dx^i
    + L^c_bd y^d dL/dy^c)`` with ``g_ab = 1/2 d2L/dy^a dy^b``.  The sign of
    the bracket term is the one for which the energy of a metric yields
    ``G^a = 1/2 Gamma^a_bc y^b y^c`` with the Levi-Civita coefficients.

    ``hessian`` optionally supplies ``d2L/dy dy`` in closed form.
    """
    x = tuple(_coords(p))
    y = np.asarray(y, dtype=float)
    rho = A.anchor(x)
    L = A.structure(x)
    dLdx, dLdy, mixed = _lagrangian_derivatives(lag, x, y)
    H = hessian(x, y) if hessian is not None else _lagrangian_hessian(lag, x, y)
    gab = 0.5 * H
    if abs(np.linalg.det(gab)) < 1e-14 * max(1.0, np.max(np.abs(gab))) ** len(y):
        raise RegularityError(f"Lagrangian is not regular at x={list(x)}, y={y.tolist()}")
    vel = rho @ y
    rhs = mixed @ vel - rho.T @ dLdx + np.einsum("cbd,d,c->b", L, y, dLdy)
    return 0.25 * np.linalg.solve(gab, rhs)


class SprayCoefficients:
    """Callable ``G(x, y)`` for the energy of ``g``, with its Levi-Civita ``Gamma``."""

    def __init__(self, A: LieAlgebroid, g: RiemannMetric):
        self.A = A
        self.g = g
        self.lagrangian = energy_lagrangian(g, A.m)
        self.connection = LeviCivitaConnection(A, g)

    def __call__(self, x, y) -> np.ndarray:
        return semispray_coeffs(self.A, self.lagrangian, x, y,
                                hessian=lambda xx, yy: 2.0 * self.g.values(xx))

    def from_connection(self, x, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return 0.5 * np.einsum("abc,b,c->a", self.connection.coefficients(x), y, y)
