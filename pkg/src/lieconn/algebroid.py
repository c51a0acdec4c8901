"""Lie algebroids in a single coordinate chart.

An algebroid of fiber rank ``m`` over an ``n``-dimensional base is given by
its anchor components ``rho[a][i]`` and bracket structure functions
``L[c][a][b]`` (``[s_a, s_b] = L^c_ab s_c``), all closed-form expressions of
``x1..xn``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .scalar_field import DomainError, Expr, ExprGrid, Neg, constant, parse_expr

__all__ = [
    "LieAlgebroid", "ValidationReport", "anchor_matrix",
    "check_structure_identities", "sample_points", "lattice_points",
]


def _expr(e, n):
    if isinstance(e, Expr):
        return e
    if isinstance(e, (int, float)):
        return constant(e, n)
    return parse_expr(str(e), n)


def _negate(e: Expr) -> Expr:
    if e.is_constant:
        return constant(-e.root.value, e.n_x) if e.root.value != 0 else e
    return Expr(Neg(e.root), e.n_x)


class LieAlgebroid:
    """A Lie algebroid given by structure functions in one chart.

    Parameters
    ----------
    n, m : int
        Base dimension (``0`` for a Lie algebra over a point) and fiber rank.
    rho : m x n nested sequence of expressions
        ``rho[a][i]`` is the anchor component ``rho_a^i``.
    brackets : dict
        Maps ``(a, b)`` with ``a < b`` (0-based) to a length-``m`` sequence
        giving ``L^c_ab`` for each ``c``.  Missing pairs are zero; the
        entries with ``a > b`` are materialized by antisymmetry.
    domain : list of (lo, hi)
        Per-axis box in which the structure functions are declared valid.
    """

    def __init__(self, n, m, rho, brackets=None, *, name="", domain=None):
        if m < 1 or n < 0:
            raise ValueError("need fiber rank m >= 1 and base dimension n >= 0")
        self.n = n
        self.m = m
        self.name = name
        rho = [[_expr(rho[a][i], n) for i in range(n)] for a in range(m)]
        if len(rho) != m:
            raise ValueError("anchor must have m rows")
        zero = constant(0.0, n)
        L = np.empty((m, m, m), dtype=object)
        L[...] = zero
        for (a, b), col in (brackets or {}).items():
            if not (0 <= a < b < m):
                raise ValueError(f"bracket key {(a, b)} must satisfy 0 <= a < b < m")
            if len(col) != m:
                raise ValueError(f"bracket ({a}, {b}) needs {m} components")
            for c in range(m):
                e = _expr(col[c], n)
                L[c, a, b] = e
                L[c, b, a] = _negate(e)
        self._init_grids(rho, L, domain)

    def _init_grids(self, rho, L, domain):
        self.rho = rho
        self.L = L
        self._rho_grid = ExprGrid(rho if self.n else [[] for _ in range(self.m)], self.n)
        self._L_grid = ExprGrid(L, self.n)
        if domain is None:
            domain = [(-1.0, 1.0)] * self.n
        if len(domain) != self.n:
            raise ValueError("domain box needs one interval per base axis")
        self.domain = [(float(lo), float(hi)) for lo, hi in domain]

    @classmethod
    def _from_grids(cls, n, m, rho, L, name, domain):
        obj = cls.__new__(cls)
        obj.n, obj.m, obj.name = n, m, name
        obj._init_grids(rho, L, domain)
        return obj

    def __repr__(self):
        return f"LieAlgebroid(name={self.name!r}, n={self.n}, m={self.m})"

    def with_bracket(self, c, a, b, expr, *, mirror=True) -> "LieAlgebroid":
        """Copy with ``L^c_ab`` replaced; ``mirror=False`` leaves ``L^c_ba`` untouched.

        The unmirrored form exists to exercise the antisymmetry check.
        """
        L = self.L.copy()
        e = _expr(expr, self.n)
        L[c, a, b] = e
        if mirror:
            L[c, b, a] = _negate(e)
        return LieAlgebroid._from_grids(self.n, self.m, self.rho, L, self.name, self.domain)

    # -- evaluation ---------------------------------------------------------

    def anchor(self, x) -> np.ndarray:
        """``(n, m)`` matrix with entry ``(i, a) = rho_a^i(x)``."""
        return self._rho_grid.values(x).reshape(self.m, self.n).T

    def anchor_jet(self, x):
        """Anchor ``(n, m)`` and its derivative ``(n, m, n)`` (last axis = d/dx^j)."""
        v, d = self._rho_grid.jet(x)
        v = v.reshape(self.m, self.n)
        d = d.reshape(self.m, self.n, self.n)
        return v.T, d.transpose(1, 0, 2)

    def structure(self, x) -> np.ndarray:
        """``(m, m, m)`` array ``[c, a, b] = L^c_ab(x)``."""
        return self._L_grid.values(x)

    def structure_jet(self, x):
        return self._L_grid.jet(x)

    def in_domain(self, x, slack=0.0) -> bool:
        return all(lo - slack <= xi <= hi + slack for xi, (lo, hi) in zip(x, self.domain))

    def kernel_basis(self, x, rtol=1e-10) -> np.ndarray:
        """Orthonormal basis (columns) of ``ker rho(x)`` in the fiber."""
        if self.n == 0:
            return np.eye(self.m)
        u, s, vt = np.linalg.svd(self.anchor(x))
        cutoff = rtol * (s[0] if s.size and s[0] > 0 else 1.0)
        rank = int(np.sum(s > cutoff)) if s.size and s[0] > 0 else 0
        return vt[rank:].T

    def image_basis(self, x, rtol=1e-10) -> np.ndarray:
        """Orthonormal basis (columns) of ``im rho(x)`` in the base tangent space."""
        if self.n == 0:
            return np.zeros((0, 0))
        u, s, vt = np.linalg.svd(self.anchor(x))
        if not s.size or s[0] == 0:
            return np.zeros((self.n, 0))
        rank = int(np.sum(s > rtol * s[0]))
        return u[:, :rank]


def anchor_matrix(A: LieAlgebroid, p) -> np.ndarray:
    return A.anchor(_coords(p))


def _coords(p):
    return tuple(getattr(p, "x", p))


# ---------------------------------------------------------------------------
# sampling


def lattice_points(domain, per_axis=5):
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in domain]
    return [np.array(pt) for pt in product(*axes)] if axes else [np.zeros(0)]


def sample_points(domain, per_axis=5, n_random=100, seed=0, margin=0.0):
    """Regular lattice plus seeded uniform random points in a box.

    ``margin`` shrinks the box on every side (useful when derivative
    stencils must stay inside the domain).
    """
    box = [(lo + margin, hi - margin) for lo, hi in domain]
    pts = lattice_points(box, per_axis)
    if not box:
        return pts
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    pts.extend(lo + (hi - lo) * rng.random((n_random, len(box))))
    return pts


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    """Maximum absolute residual of each structure identity over a sample."""

    residuals: dict
    worst_points: dict
    tol: float
    n_points: int
    errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors and all(r <= self.tol for r in self.residuals.values())

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "n_points": self.n_points,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "worst_points": {k: [float(c) for c in v] if v is not None else None
                             for k, v in self.worst_points.items()},
            "errors": list(self.errors),
        }


def identity_residuals(A: LieAlgebroid, x):
    """Residual arrays of the anchor, antisymmetry and Jacobi identities at ``x``.

    Returns ``(anchor[a, b, j], antisym[c, a, b], jacobi[a, b, c, e])`` with
    only the ``a < b`` (resp. ``a < b < c``) entries meaningful.
    """
    rho, drho = A.anchor_jet(x)  # (n, m), (n, m, n)
    L, dL = A.structure_jet(x)  # (m, m, m), (m, m, m, n)
    # rho_a^i d_i rho_b^j - rho_b^i d_i rho_a^j - rho_c^j L^c_ab
    dir_rho = np.einsum("ia,jbi->abj", rho, drho)
    anchor = dir_rho - dir_rho.transpose(1, 0, 2) - np.einsum("jc,cab->abj", rho, L)
    antisym = L + L.transpose(0, 2, 1)
    # [[s_a, s_b], s_c] = (L^d_ab L^e_dc - rho_c^i d_i L^e_ab) s_e, summed cyclically
    quad = np.einsum("dab,edc->abce", L, L)
    deriv = np.einsum("ic,eabi->abce", rho, dL)
    term = quad - deriv
    jacobi = term + term.transpose(1, 2, 0, 3) + term.transpose(2, 0, 1, 3)
    return anchor, antisym, jacobi


def check_structure_identities(A: LieAlgebroid, sample, tol: float = 1e-8) -> ValidationReport:
    """Check the anchor, antisymmetry and Jacobi identities numerically.

    Residuals are maxima of absolute values over the sample and over the
    index combinations ``a < b`` (anchor) and ``a < b < c`` (Jacobi).
    """
    sample = list(sample)
    if not sample:
        raise ValueError("empty sample")
    m = A.m
    upper = np.triu(np.ones((m, m), dtype=bool), k=1)
    triple = np.zeros((m, m, m), dtype=bool)
    for a in range(m):
        for b in range(a + 1, m):
            triple[a, b, b + 1:] = True
    best = {"anchor": 0.0, "antisymmetry": 0.0, "jacobi": 0.0}
    worst = {k: None for k in best}
    errors = []
    for x in sample:
        x = np.asarray(_coords(x), dtype=float)
        try:
            anc, anti, jac = identity_residuals(A, x)
        except DomainError as exc:
            errors.append(f"{exc} (sample point {x.tolist()})")
            continue
        vals = {
            "anchor": np.max(np.abs(anc[upper]), initial=0.0),
            "antisymmetry": np.max(np.abs(anti), initial=0.0),
            "jacobi": np.max(np.abs(jac[triple]), initial=0.0),
        }
        for k, v in vals.items():
            if worst[k] is None or v > best[k]:
                best[k] = float(v)
                worst[k] = x
    return ValidationReport(best, worst, tol, len(sample), errors)
