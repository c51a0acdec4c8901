"""Sampled holonomy, invariant fiber metrics and the metrizability decision.

The holonomy group at ``x0`` is represented by transport maps around a
finite loop family: coordinate-plane rectangles at several scales, vertical
loops in ``ker rho(x0)``, their reverses and a few concatenations, plus
matrix products of generator pairs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from .algebroid import LieAlgebroid, _coords
from .scalar_field import DomainError
from .transport import (
    APath, NotLiftableError, lift_base_path, make_vertical_path, rectangle_curve,
    segment_curve, transport_matrices,
)

__all__ = [
    "SCALES", "Loop", "LoopFamily", "EmptyFamilyError", "HolonomySample", "SPDSearchResult",
    "IsometryReport", "Reconstruction", "MetrizeOptions", "MetrizabilityVerdict",
    "generate_loops", "holonomy_matrices", "invariant_spd_search", "isometry_check",
    "orthogonality_residual", "reconstruct_metric", "metrizability_test",
    "coherence_residuals", "displacement_isometry_limit",
]

SCALES = (0.05, 0.1, 0.2, 0.4)


class EmptyFamilyError(ValueError):
    pass


@dataclass
class Loop:
    path: APath
    kind: str  # rectangle | vertical | reverse | concatenation
    label: str
    axes: tuple | None = None
    scale: float | None = None
    parents: tuple = ()

    def to_dict(self):
        return {"kind": self.kind, "label": self.label,
                "axes": list(self.axes) if self.axes is not None else None,
                "scale": self.scale, "parents": list(self.parents)}


@dataclass
class LoopFamily:
    x0: np.ndarray
    loops: list
    skipped: list = field(default_factory=list)

    @property
    def generators(self):
        return [i for i, lp in enumerate(self.loops) if lp.kind in ("rectangle", "vertical")]


def _fit_rectangle(A, x0, i, j, s):
    """Side signs keeping all corners inside the chart box, or ``None``."""
    for si, sj in ((s, s), (-s, s), (s, -s), (-s, -s)):
        corners = [x0.copy() for _ in range(3)]
        corners[0][i] += si
        corners[1][j] += sj
        corners[2][i] += si
        corners[2][j] += sj
        if all(A.in_domain(c) for c in corners):
            return si, sj
    return None


def generate_loops(A: LieAlgebroid, x0, scales=SCALES, axes=None, *, steps: int = 400,
                   vertical_amplitude: float = 1.0, concatenations: bool = True) -> LoopFamily:
    """Build the loop family at ``x0``.

    Rectangles in each coordinate plane are lifted with the minimal-norm
    lift and skipped when the anchor cannot realize them.  Each kernel basis
    vector ``v`` of ``rho(x0)`` gives a vertical loop ``y(t) = sin(pi t) v``.
    Reverses of every generator and concatenations of consecutive generators
    are appended.
    """
    x0 = np.asarray(_coords(x0), dtype=float)
    if not A.in_domain(x0):
        raise ValueError(f"x0={x0.tolist()} is outside the chart box")
    if steps % 4:
        raise ValueError("loop step count must be divisible by 4 (corners on grid nodes)")
    pairs = list(combinations(range(A.n), 2)) if axes is None else [tuple(p) for p in axes]
    loops, skipped = [], []
    for (i, j), s in product(pairs, scales):
        label = f"rect(x{i + 1},x{j + 1};{s:g})"
        sides = _fit_rectangle(A, x0, i, j, s)
        if sides is None:
            skipped.append({"label": label, "reason": "rectangle leaves the chart box"})
            continue
        base, vel = rectangle_curve(x0, i, j, *sides)
        try:
            path = lift_base_path(A, base, steps, velocity=vel)
        except NotLiftableError as exc:
            skipped.append({"label": label, "reason": str(exc)})
            continue
        path.meta = {"kind": "rectangle", "axes": [i, j], "sides": list(sides)}
        loops.append(Loop(path, "rectangle", label, (i, j), s))
    kernel = A.kernel_basis(x0)
    for c in range(kernel.shape[1]):
        v = vertical_amplitude * kernel[:, c]
        path = make_vertical_path(A, x0, lambda t, v=v: np.sin(np.pi * t) * v, steps)
        loops.append(Loop(path, "vertical", f"vertical(k{c + 1})"))
    if not loops:
        raise EmptyFamilyError(
            "no liftable rectangle and trivial anchor kernel at "
            f"x0={x0.tolist()}; holonomy cannot be sampled"
        )
    gens = list(range(len(loops)))
    for g in gens:
        lp = loops[g]
        loops.append(Loop(lp.path.reversed(), "reverse", f"reverse({lp.label})", lp.axes,
                          lp.scale, (g,)))
    if concatenations:
        for g1, g2 in zip(gens, gens[1:]):
            a, b = loops[g1], loops[g2]
            loops.append(Loop(a.path.then(b.path), "concatenation",
                              f"({a.label})*({b.label})", None, None, (g1, g2)))
    return LoopFamily(x0, loops, skipped)


@dataclass
class HolonomySample:
    x0: np.ndarray
    matrices: list
    labels: list
    meta: list
    family: LoopFamily | None = None

    def to_dict(self):
        return {
            "x0": self.x0.tolist(),
            "matrices": [{"label": lb, "matrix": H.tolist(), "det": float(np.linalg.det(H)), **mt}
                         for H, lb, mt in zip(self.matrices, self.labels, self.meta)],
            "skipped": list(self.family.skipped) if self.family else [],
        }


def holonomy_matrices(D, A: LieAlgebroid, family: LoopFamily, *, max_products: int = 8) -> HolonomySample:
    """Transport maps around every loop, plus products ``H_j H_i`` of generator pairs."""
    if not family.loops:
        raise EmptyFamilyError("empty loop family")
    mats, labels, meta = [], [], []
    for idx, lp in enumerate(family.loops):
        H = transport_matrices(D, A, lp.path)[-1]
        mats.append(H)
        labels.append(lp.label)
        meta.append({"source": "loop", "loop": idx, **lp.to_dict()})
    gens = family.generators[:max_products]
    for i, j in combinations(gens, 2):
        # P_{a_i o a_j} = P_{a_j} P_{a_i}
        mats.append(mats[j] @ mats[i])
        labels.append(f"product({labels[i]},{labels[j]})")
        meta.append({"source": "product", "factors": [i, j]})
    return HolonomySample(family.x0, mats, labels, meta, family)


def coherence_residuals(sample: HolonomySample) -> dict:
    """Max deviation of recorded reverses from inverses and concatenations from products."""
    rev, cat = 0.0, 0.0
    loops = sample.family.loops if sample.family else []
    for idx, lp in enumerate(loops):
        H = sample.matrices[idx]
        if lp.kind == "reverse":
            (g,) = lp.parents
            rev = max(rev, float(np.max(np.abs(H @ sample.matrices[g] - np.eye(len(H))))))
        elif lp.kind == "concatenation":
            g1, g2 = lp.parents
            cat = max(cat, float(np.max(np.abs(H - sample.matrices[g2] @ sample.matrices[g1]))))
    return {"reverse": rev, "concatenation": cat}


# ---------------------------------------------------------------------------
# invariant forms


def _sym_basis(k):
    basis = []
    for a in range(k):
        for b in range(a, k):
            E = np.zeros((k, k))
            if a == b:
                E[a, a] = 1.0
            else:
                E[a, b] = E[b, a] = 1.0 / np.sqrt(2.0)
            basis.append(E)
    return np.array(basis)


@dataclass
class SPDSearchResult:
    G: np.ndarray | None
    min_eigenvalue: float
    null_dim: int
    singular_values: np.ndarray

    @property
    def found(self) -> bool:
        return self.G is not None

    def to_dict(self):
        return {"found": self.found, "G": None if self.G is None else self.G.tolist(),
                "min_eigenvalue": self.min_eigenvalue, "null_dim": self.null_dim,
                "singular_values": self.singular_values.tolist()}


def _min_eig(B, c):
    G = np.tensordot(c, B, axes=1)
    w, v = np.linalg.eigh(G)
    return w[0], v[:, 0]


def _ascend(B, c, iters=300):
    """Projected gradient ascent of ``lambda_min(sum c_i B_i)`` on the unit sphere."""
    c = c / np.linalg.norm(c)
    lam, v = _min_eig(B, c)
    eta = 0.5
    for _ in range(iters):
        grad = np.einsum("i,rij,j->r", v, B, v)
        grad -= (grad @ c) * c
        if np.linalg.norm(grad) < 1e-14 or eta < 1e-12:
            break
        trial = c + eta * grad
        trial /= np.linalg.norm(trial)
        lam_t, v_t = _min_eig(B, trial)
        if lam_t > lam:
            c, lam, v = trial, lam_t, v_t
            eta = min(2 * eta, 1.0)
        else:
            eta *= 0.5
    return c, lam


def invariant_spd_search(sample, eps: float = 1e-8, *, seed: int = 0, restarts: int = 3,
                         pd_threshold: float = 1e-8) -> SPDSearchResult:
    """Find a positive-definite ``G`` with ``H^T G H = G`` for every sampled ``H``.

    The invariance conditions form a linear operator on symmetric matrices;
    its numerical null space (singular values below ``eps * sigma_max``) is
    searched for the element of maximal minimum eigenvalue.  The result is
    normalized to unit trace; when no candidate is positive definite the
    best minimum eigenvalue (of a unit-Frobenius-norm element) is returned
    as the certificate.
    """
    mats = sample.matrices if isinstance(sample, HolonomySample) else list(sample)
    if not mats:
        raise EmptyFamilyError("empty holonomy sample")
    k = mats[0].shape[0]
    B = _sym_basis(k)
    cols = [np.concatenate([(H.T @ E @ H - E).ravel() for H in mats]) for E in B]
    op = np.array(cols).T
    _, sv, vt = np.linalg.svd(op, full_matrices=True)
    smax = sv[0] if sv.size else 0.0
    padded = np.zeros(len(B))
    padded[: len(sv)] = sv
    null = vt[padded <= eps * smax] if smax > 0 else np.eye(len(B))
    if null.shape[0] == 0:
        return SPDSearchResult(None, -np.inf, 0, sv)
    NB = np.tensordot(null, B, axes=1)  # basis of the null space as matrices
    ident = np.array([np.sum(E * np.eye(k)) for E in B]) @ null.T
    rng = np.random.default_rng(seed)
    starts = [ident] if np.linalg.norm(ident) > 1e-12 else []
    starts += [rng.standard_normal(null.shape[0]) for _ in range(restarts)]
    best_c, best_lam = None, -np.inf
    for c0 in starts:
        for sgn in (1.0, -1.0):
            c, lam = _ascend(NB, sgn * c0)
            # strict improvement keeps the identity-start result on ties
            if lam > best_lam + 1e-12:
                best_c, best_lam = c, lam
    if best_lam <= pd_threshold:
        return SPDSearchResult(None, float(best_lam), null.shape[0], sv)
    G = np.tensordot(best_c, NB, axes=1)
    G = 0.5 * (G + G.T)
    return SPDSearchResult(G / np.trace(G), float(best_lam), null.shape[0], sv)


@dataclass
class IsometryReport:
    max_residual: float
    worst_label: str | None
    tol: float

    @property
    def passed(self):
        return self.max_residual <= self.tol

    def to_dict(self):
        return {"passed": self.passed, "max_residual": self.max_residual,
                "worst_label": self.worst_label, "tol": self.tol}


def isometry_check(sample: HolonomySample, G, tol: float = 1e-6) -> IsometryReport:
    """``max_j ||H_j^T G H_j - G||_inf`` over the sample."""
    G = np.asarray(G, dtype=float)
    worst, label = -1.0, None
    for H, lb in zip(sample.matrices, sample.labels):
        if H.shape != G.shape:
            raise ValueError("metric and holonomy dimensions differ")
        r = float(np.max(np.abs(H.T @ G @ H - G)))
        if r > worst:
            worst, label = r, lb
    return IsometryReport(worst, label, tol)


def orthogonality_residual(sample, G) -> float:
    """``max ||Q^T Q - I||`` with ``Q = C H C^{-1}`` and ``G = C^T C``."""
    mats = sample.matrices if isinstance(sample, HolonomySample) else list(sample)
    C = np.linalg.cholesky(np.asarray(G, dtype=float)).T
    Ci = np.linalg.inv(C)
    k = C.shape[0]
    return max(float(np.max(np.abs((C @ H @ Ci).T @ (C @ H @ Ci) - np.eye(k)))) for H in mats)


# ---------------------------------------------------------------------------
# reconstruction


def _pullback(P, G0):
    Pi = np.linalg.inv(P)
    return Pi.T @ G0 @ Pi


def _segment_transport(D, A, p, q, steps):
    base, vel = segment_curve(p, q)
    path = lift_base_path(A, base, steps, velocity=vel)
    return transport_matrices(D, A, path)[-1]


def _axis_legs_transport(D, A, x0, p, steps):
    """Transport along axis-aligned legs (axis order), or ``None`` if some leg is not liftable."""
    P = np.eye(D.k)
    cur = x0.copy()
    for i in range(A.n):
        if p[i] == cur[i]:
            continue
        nxt = cur.copy()
        nxt[i] = p[i]
        try:
            P = _segment_transport(D, A, cur, nxt, steps) @ P
        except NotLiftableError:
            return None
        cur = nxt
    return P


def _flow_transport(D, A, p, a, tau, steps=8):
    """Transport along the anchor flow ``x' = rho_a(x)`` (``y = e_a``) for time ``tau``."""
    def f(x, Z):
        return A.anchor(tuple(x))[:, a], -D.coefficients(tuple(x))[:, :, a] @ Z

    x, Z = np.asarray(p, dtype=float), np.eye(D.k)
    h = tau / steps
    for _ in range(steps):
        k1 = f(x, Z)
        k2 = f(x + 0.5 * h * k1[0], Z + 0.5 * h * k1[1])
        k3 = f(x + 0.5 * h * k2[0], Z + 0.5 * h * k2[1])
        k4 = f(x + h * k3[0], Z + h * k3[1])
        x = x + (h / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        Z = Z + (h / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return Z


def _local_compatibility(D, A, p, gp, delta):
    """Max entry of ``rho_a(g) - Gamma_a^T g - g Gamma_a``.

    The derivative is a 4th-order central difference along the anchor flow.
    """
    gam = D.coefficients(tuple(p))
    worst = 0.0
    for a in range(A.m):
        f = {s: _pullback(_flow_transport(D, A, p, a, s * delta), gp) for s in (-2, -1, 1, 2)}
        deriv = (8 * (f[1] - f[-1]) - (f[2] - f[-2])) / (12 * delta)
        Ga = gam[:, :, a]  # Ga[gamma, alpha]
        res = deriv - Ga.T @ gp - gp @ Ga
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


@dataclass
class Reconstruction:
    probes: list
    metrics: list
    skipped: list
    consistency_residual: float
    compatibility_residual: float
    unreachable_directions: list

    def table(self):
        return [{"x": p.tolist(), "g": g.tolist()} for p, g in zip(self.probes, self.metrics)]


def default_probes(A: LieAlgebroid, x0, radius=None, per_axis=3):
    """Lattice of probes around ``x0`` clipped to the chart box."""
    x0 = np.asarray(_coords(x0), dtype=float)
    if A.n == 0:
        return [x0]
    axes = []
    for i, (lo, hi) in enumerate(A.domain):
        r = radius if radius is not None else 0.25 * min(1.0, hi - lo)
        axes.append(np.clip(np.linspace(x0[i] - r, x0[i] + r, per_axis), lo, hi))
    return [np.array(pt) for pt in product(*axes)]


def reconstruct_metric(D, A: LieAlgebroid, G0, x0, probes=None, *, steps: int = 400,
                       delta: float = 1e-3) -> Reconstruction:
    """Propagate ``G0`` from ``x0`` by parallel transport and measure how well it fits.

    ``g(p) = P^{-T} G0 P^{-1}`` with ``P`` the transport along the lifted
    straight segment ``x0 -> p``.  The consistency residual compares this with
    the propagation along axis-aligned legs; the compatibility residual is the
    local equation ``D g = 0`` with derivatives along anchor directions taken
    by central differences of the propagated metric.
    """
    x0 = np.asarray(_coords(x0), dtype=float)
    G0 = np.asarray(G0, dtype=float)
    probes = default_probes(A, x0) if probes is None else [np.asarray(_coords(p), float) for p in probes]
    img = A.image_basis(x0)
    unreachable = []
    if A.n:
        comp = np.eye(A.n) - img @ img.T
        for i in range(A.n):
            if np.linalg.norm(comp[:, i]) > 1e-8:
                unreachable.append(f"x{i + 1}")
    kept, metrics, skipped = [], [], []
    consistency, compat = 0.0, 0.0
    for p in probes:
        try:
            if np.allclose(p, x0):
                P = np.eye(D.k)
            else:
                P = _segment_transport(D, A, x0, p, steps)
            gp = _pullback(P, G0)
            Q = _axis_legs_transport(D, A, x0, p, steps)
            if Q is not None:
                consistency = max(consistency, float(np.max(np.abs(_pullback(Q, G0) - gp))))
            compat = max(compat, _local_compatibility(D, A, p, gp, delta))
        except NotLiftableError as exc:
            skipped.append({"x": p.tolist(), "reason": str(exc)})
            continue
        except DomainError as exc:
            skipped.append({"x": p.tolist(), "reason": f"expression domain error: {exc}"})
            continue
        kept.append(p)
        metrics.append(gp)
    return Reconstruction(kept, metrics, skipped, consistency, compat, unreachable)


# ---------------------------------------------------------------------------
# verdict


@dataclass
class MetrizeOptions:
    scales: tuple = SCALES
    steps: int = 400
    eps: float = 1e-8
    seed: int = 0
    restarts: int = 3
    det_tol: float = 1e-6
    compatibility_tol: float = 1e-5
    consistency_tol: float = 1e-6
    isometry_tol: float = 1e-6
    probe_radius: float | None = None
    probes_per_axis: int = 3
    delta: float = 1e-3


@dataclass
class MetrizabilityVerdict:
    kind: str  # Metrizable | NotMetrizable | Inconclusive
    reason: str
    G0: np.ndarray | None = None
    reconstruction: Reconstruction | None = None
    witness: dict | None = None
    search: SPDSearchResult | None = None
    sample: HolonomySample | None = None
    residuals: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"verdict": self.kind, "reason": self.reason, "residuals": dict(self.residuals)}
        if self.G0 is not None:
            out["G0"] = self.G0.tolist()
        if self.witness is not None:
            out["witness"] = self.witness
        if self.search is not None:
            out["spd_search"] = self.search.to_dict()
        if self.reconstruction is not None:
            r = self.reconstruction
            out["reconstruction"] = {
                "probes": len(r.probes), "skipped": r.skipped,
                "unreachable_directions": r.unreachable_directions,
            }
        if self.sample is not None:
            out["n_holonomy_matrices"] = len(self.sample.matrices)
        return out


def metrizability_test(D, A: LieAlgebroid, x0, options: MetrizeOptions | None = None,
                       probes=None) -> MetrizabilityVerdict:
    """Decide whether ``D`` admits a compatible fiber metric near ``x0``.

    NotMetrizable needs a certificate (a transport with ``|det| != 1``, or no
    positive-definite invariant form of the sample).  Metrizable needs a
    reconstructed metric passing the consistency and local compatibility
    tolerances with every base direction reachable.  Anything else is
    Inconclusive, with the reason.
    """
    opt = options or MetrizeOptions()
    try:
        family = generate_loops(A, x0, opt.scales, steps=opt.steps)
    except EmptyFamilyError as exc:
        return MetrizabilityVerdict("Inconclusive", str(exc))
    sample = holonomy_matrices(D, A, family)
    for H, lb in zip(sample.matrices, sample.labels):
        d = float(np.linalg.det(H))
        if abs(abs(d) - 1.0) > opt.det_tol:
            return MetrizabilityVerdict(
                "NotMetrizable",
                "a holonomy transport has |det| != 1, so it is not an isometry of any scalar product",
                witness={"certificate": "determinant", "label": lb, "det": d, "matrix": H.tolist()},
                sample=sample)
    search = invariant_spd_search(sample, opt.eps, seed=opt.seed, restarts=opt.restarts)
    if not search.found:
        return MetrizabilityVerdict(
            "NotMetrizable", "no positive-definite form is invariant under the sampled holonomy",
            witness={"certificate": "min_eigenvalue", "min_eigenvalue": search.min_eigenvalue,
                     "labels": list(sample.labels)},
            search=search, sample=sample)
    G0 = search.G
    iso = isometry_check(sample, G0, opt.isometry_tol)
    pr = probes if probes is not None else default_probes(A, family.x0, opt.probe_radius,
                                                          opt.probes_per_axis)
    rec = reconstruct_metric(D, A, G0, family.x0, pr, steps=opt.steps, delta=opt.delta)
    residuals = {"isometry": iso.max_residual, "consistency": rec.consistency_residual,
                 "compatibility": rec.compatibility_residual}
    common = dict(G0=G0, reconstruction=rec, search=search, sample=sample, residuals=residuals)
    if rec.unreachable_directions:
        return MetrizabilityVerdict(
            "Inconclusive",
            "the anchor image misses base directions "
            f"{', '.join(rec.unreachable_directions)}; transport cannot propagate the metric "
            "there, so compatibility was checked only along reachable directions",
            **common)
    if rec.skipped:
        return MetrizabilityVerdict(
            "Inconclusive", f"{len(rec.skipped)} probe(s) not reachable by a lifted segment", **common)
    if (rec.compatibility_residual > opt.compatibility_tol
            or rec.consistency_residual > opt.consistency_tol or not iso.passed):
        return MetrizabilityVerdict(
            "Inconclusive",
            "an invariant form exists on the sampled holonomy but the propagated metric fails "
            "the residual tolerances; the holonomy sample is likely too sparse",
            **common)
    return MetrizabilityVerdict("Metrizable", "propagated metric is compatible on all probes",
                                **common)


def displacement_isometry_limit(D, A: LieAlgebroid, g, path: APath, divisors=(8, 16, 32, 64)):
    """Quotients ``max |g_{x(t)}(P^t e_i, P^t e_j) - g_{x(0)}(e_i, e_j)| / t`` for ``t = T/d``.

    For a compatible pair they tend to zero; otherwise to ``|(D_y g)|`` at the
    start point.  Returns ``(ts, quotients)``.
    """
    Phi = transport_matrices(D, A, path)
    T = path.t[-1] - path.t[0]
    g0 = g.values(tuple(path.x[0]))
    ts, qs = [], []
    for d in divisors:
        j = int(np.argmin(np.abs(path.t - path.t[0] - T / d)))
        P = Phi[j]
        gt = g.values(tuple(path.x[j]))
        tj = path.t[j] - path.t[0]
        ts.append(tj)
        qs.append(float(np.max(np.abs(P.T @ gt @ P - g0))) / tj)
    return np.array(ts), np.array(qs)
