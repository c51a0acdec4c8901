"""A-connections in an auxiliary vector bundle and their local invariants.

Index convention: ``gamma[beta, alpha, a] = Gamma^beta_{alpha a}`` with
``D_{s_a} sigma_alpha = Gamma^beta_{alpha a} sigma_beta``, i.e. the section
index comes first and the direction index second.
"""
from __future__ import annotations

import numpy as np

from .algebroid import LieAlgebroid, _coords
from .scalar_field import ExprGrid, constant

__all__ = [
    "AConnection", "RiemannMetric", "SectionField", "covariant_derivative",
    "compatibility_residual", "torsion", "curvature", "curvature_nested",
    "sectional_curvature", "DimensionError",
]


class DimensionError(ValueError):
    pass


class AConnection:
    """An A-connection given by coefficient expressions.

    ``gamma`` is a ``k x k x m`` nested sequence indexed ``[beta][alpha][a]``.
    """

    def __init__(self, gamma, n: int, m: int, *, name: str = "", linear: bool | None = None):
        grid = ExprGrid(gamma, n)
        if len(grid.shape) != 3 or grid.shape[0] != grid.shape[1] or grid.shape[2] != m:
            raise DimensionError(f"connection grid must be k x k x {m}, got {grid.shape}")
        self.n, self.m, self.k = n, m, grid.shape[0]
        self.name = name
        self.linear = (self.k == m) if linear is None else bool(linear)
        if self.linear and self.k != m:
            raise DimensionError("a linear connection needs k == m")
        self._grid = grid

    @classmethod
    def flat(cls, n: int, m: int, k: int | None = None, **kw) -> "AConnection":
        k = m if k is None else k
        zero = constant(0.0, n)
        return cls([[[zero] * m for _ in range(k)] for _ in range(k)], n, m, **kw)

    def __repr__(self):
        return f"AConnection(name={self.name!r}, k={self.k}, m={self.m})"

    def coefficients(self, x) -> np.ndarray:
        return self._grid.values(x)

    def coefficient_jet(self, x):
        """``(Gamma, dGamma)`` with ``dGamma[beta, alpha, a, i] = d_i Gamma^beta_{alpha a}``."""
        return self._grid.jet(x)


class RiemannMetric:
    """Fiber metric ``g[alpha][beta]`` given by its upper triangle.

    ``entries`` is either a ragged upper triangle (row ``alpha`` holds the
    ``k - alpha`` entries with ``beta >= alpha``) or a full square table whose
    lower triangle repeats the upper one.
    """

    def __init__(self, entries, n: int, *, name: str = ""):
        k = len(entries)
        rows = [list(r) for r in entries]
        if all(len(r) == k - a for a, r in enumerate(rows)):
            upper = {(a, a + j): e for a, r in enumerate(rows) for j, e in enumerate(r)}
        elif all(len(r) == k for r in rows):
            full = ExprGrid(rows, n)
            for a in range(k):
                for b in range(a + 1, k):
                    if full[a, b] != full[b, a]:
                        raise ValueError(f"metric table is not symmetric at ({a}, {b})")
            upper = {(a, b): full[a, b] for a in range(k) for b in range(a, k)}
        else:
            raise ValueError("metric must be a ragged upper triangle or a square table")
        self.n, self.k, self.name = n, k, name
        table = [[upper[min(a, b), max(a, b)] for b in range(k)] for a in range(k)]
        self._grid = ExprGrid(table, n)

    def __getitem__(self, idx):
        return self._grid[idx]

    def values(self, x) -> np.ndarray:
        return self._grid.values(x)

    def jet(self, x):
        return self._grid.jet(x)

    def jet2(self, x):
        return self._grid.jet2(x)

    def min_eigenvalue(self, x) -> float:
        return float(np.linalg.eigvalsh(self.values(x))[0])

    def check_positive_definite(self, sample, threshold: float = 1e-10):
        """Return ``(ok, min_eig, worst_point)`` over the sample."""
        worst, worst_pt = np.inf, None
        for x in sample:
            lam = self.min_eigenvalue(_coords(x))
            if lam < worst:
                worst, worst_pt = lam, np.asarray(_coords(x), dtype=float)
        return worst > threshold, worst, worst_pt


class SectionField:
    """A local section ``z^alpha(x) sigma_alpha`` of the auxiliary bundle."""

    def __init__(self, components, n: int):
        self._grid = ExprGrid(list(components), n)
        self.k = self._grid.shape[0]
        self.n = n

    def values(self, x) -> np.ndarray:
        return self._grid.values(x)

    def jet(self, x):
        return self._grid.jet(x)


def _check_dims(D, A):
    if D.m != A.m or D.n != A.n:
        raise DimensionError(f"connection (n={D.n}, m={D.m}) does not match algebroid "
                             f"(n={A.n}, m={A.m})")


def covariant_derivative(D, A: LieAlgebroid, sigma: SectionField, a: int, p) -> np.ndarray:
    """``D_a z^beta = rho_a^i dz^beta/dx^i + Gamma^beta_{alpha a} z^alpha`` at ``p``."""
    _check_dims(D, A)
    if not 0 <= a < A.m:
        raise IndexError(f"direction index {a} out of range")
    x = _coords(p)
    z, dz = sigma.jet(x)
    rho = A.anchor(x)
    gamma = D.coefficients(x)
    return dz @ rho[:, a] + gamma[:, :, a] @ z


def _directional(rho, d):
    """Contract a derivative array (last axis = d/dx^i) with every anchor column."""
    return np.moveaxis(d @ rho, -1, 0)


def compatibility_residual(D, g: RiemannMetric, A: LieAlgebroid, p) -> np.ndarray:
    """``(m, k, k)`` residual of ``D g = 0``.

    Entry ``(a, alpha, beta)`` is
    ``rho_a^i d_i g_{alpha beta} - Gamma^gamma_{alpha a} g_{gamma beta}
    - Gamma^gamma_{beta a} g_{alpha gamma}``.
    """
    _check_dims(D, A)
    if g.k != D.k:
        raise DimensionError("metric rank does not match connection rank")
    x = _coords(p)
    gv, dg = g.jet(x)
    rho = A.anchor(x)
    gamma = D.coefficients(x)
    lhs = _directional(rho, dg)  # (m, k, k)
    t1 = np.einsum("cAa,cB->aAB", gamma, gv)
    return lhs - t1 - t1.transpose(0, 2, 1)


def torsion(D, A: LieAlgebroid, p) -> np.ndarray:
    """``T[a, b, c] = Gamma^a_{cb} - Gamma^a_{bc} - L^a_bc`` for a linear connection."""
    _check_dims(D, A)
    if not getattr(D, "linear", False) or D.k != A.m:
        raise DimensionError("torsion needs a linear connection (k == m)")
    x = _coords(p)
    gamma = D.coefficients(x)
    return gamma.transpose(0, 2, 1) - gamma - A.structure(x)


def curvature(D, A: LieAlgebroid, p) -> np.ndarray:
    """``R[beta, alpha, a, b]`` with ``R(s_a, s_b) sigma_alpha = R^beta_{alpha ab} sigma_beta``.

    Expanding ``D_a D_b - D_b D_a - D_[s_a, s_b]`` on basis sections gives::

        R^beta_{alpha ab} = rho_a^i d_i Gamma^beta_{alpha b} - rho_b^i d_i Gamma^beta_{alpha a}
                          + Gamma^gamma_{alpha b} Gamma^beta_{gamma a}
                          - Gamma^gamma_{alpha a} Gamma^beta_{gamma b}
                          - L^c_ab Gamma^beta_{alpha c}
    """
    _check_dims(D, A)
    x = _coords(p)
    gamma, dgamma = D.coefficient_jet(x)
    rho = A.anchor(x)
    L = A.structure(x)
    # dir[a, beta, alpha, b] = rho_a^i d_i Gamma^beta_{alpha b}
    dirv = _directional(rho, dgamma)
    deriv = np.einsum("aBAb->BAab", dirv)
    quad = np.einsum("gAb,Bga->BAab", gamma, gamma)
    # L is antisymmetric in (a, b), so half of it goes into H; H - H^T is exactly antisymmetric
    half = deriv + quad - 0.5 * np.einsum("cab,BAc->BAab", L, gamma)
    return half - half.transpose(0, 1, 3, 2)


def curvature_nested(D, A: LieAlgebroid, p, h: float = 1e-3) -> np.ndarray:
    """Curvature from nested covariant derivatives of constant basis sections.

    Independent of :func:`curvature`: the section ``D_b sigma_alpha`` is
    differentiated with a 4th-order central difference of the coefficient
    functions instead of dual numbers.
    """
    _check_dims(D, A)
    x = np.asarray(_coords(p), dtype=float)
    k, m, n = D.k, A.m, A.n
    gamma = D.coefficients(x)
    rho = A.anchor(x)
    L = A.structure(x)
    dgamma = np.zeros((k, k, m, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        f = [D.coefficients(x + s * e) for s in (-2, -1, 1, 2)]
        dgamma[..., i] = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
    R = np.zeros((k, k, m, m))
    for alpha in range(k):
        for a in range(m):
            for b in range(m):
                # inner: D_b sigma_alpha has coefficients Gamma[:, alpha, b](x)
                inner_b, inner_a = gamma[:, alpha, b], gamma[:, alpha, a]
                d_inner_b = dgamma[:, alpha, b, :]
                d_inner_a = dgamma[:, alpha, a, :]
                outer_ab = d_inner_b @ rho[:, a] + gamma[:, :, a] @ inner_b
                outer_ba = d_inner_a @ rho[:, b] + gamma[:, :, b] @ inner_a
                bracket = sum(L[c, a, b] * gamma[:, alpha, c] for c in range(m))
                R[:, alpha, a, b] = outer_ab - outer_ba - bracket
    return R


def sectional_curvature(R: np.ndarray, g: np.ndarray, a: int = 0, b: int = 1) -> float:
    """``g(R(s_a, s_b) s_b, s_a) / (g_aa g_bb - g_ab^2)`` for a linear connection."""
    num = R[:, b, a, b] @ g[:, a]
    return float(num / (g[a, a] * g[b, b] - g[a, b] ** 2))
