import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lieconn import (
    AConnection, LeviCivitaConnection, LieAlgebroid, RiemannMetric, SingularMetricError,
    SprayCoefficients, compatibility_residual, energy_lagrangian, get_example, levi_civita_coeffs,
    semispray_coeffs, torsion,
)
from lieconn.levi_civita import RegularityError
from lieconn.scalar_field import parse_expr

from .conftest import METRIC_EXAMPLES, random_points


def christoffel(g_entries, x):
    """Textbook Christoffel symbols from expression partials (tangent bundle only)."""
    n = len(g_entries)
    g = [[parse_expr(str(e), n) for e in row] for row in g_entries]
    gv = np.array([[e.value(x) for e in row] for row in g])
    dg = np.array([[[e.partial(i, x) for i in range(n)] for e in row] for row in g])  # [b, c, i]
    ginv = np.linalg.inv(gv)
    out = np.zeros((n, n, n))
    for a in range(n):
        for b in range(n):
            for c in range(n):
                out[a, b, c] = 0.5 * sum(
                    ginv[a, d] * (dg[c, d, b] + dg[b, d, c] - dg[b, c, d]) for d in range(n))
    return out


def test_euclidean_is_flat(tangent_plane):
    g = RiemannMetric([[1, 0], [1]], 2)
    assert not levi_civita_coeffs(tangent_plane, g, (0.3, 0.1)).any()


@pytest.mark.parametrize("entries", [
    [["exp(2*x1)", "0"], ["0", "1"]],
    [["1/x2^2", "0"], ["0", "1/x2^2"]],
    [["2+x1^2", "x1*x2"], ["x1*x2", "3+sin(x2)"]],
])
def test_matches_classical_christoffel(tangent_plane, entries, rng):
    g = RiemannMetric(entries, 2)
    for _ in range(20):
        x = (rng.uniform(-1, 1), rng.uniform(0.3, 2))
        assert np.max(np.abs(levi_civita_coeffs(tangent_plane, g, x) - christoffel(entries, x))) <= 1e-12


def test_so3_brute_force(so3):
    g = np.diag([1.0, 2.0, 3.0])
    gm = RiemannMetric([[1, 0, 0], [2, 0], [3]], 0)
    L = so3.structure(())
    ginv = np.linalg.inv(g)
    ref = np.zeros((3, 3, 3))
    for a in range(3):
        for b in range(3):
            for c in range(3):
                ref[a, b, c] = 0.5 * sum(
                    ginv[a, d] * sum(L[e, d, c] * g[e, b] + L[e, d, b] * g[e, c] - L[e, b, c] * g[e, d]
                                     for e in range(3))
                    for d in range(3))
    assert np.allclose(levi_civita_coeffs(so3, gm, ()), ref, atol=1e-15)


def test_so3_bi_invariant_is_half_bracket(so3):
    gam = levi_civita_coeffs(so3, RiemannMetric([[1, 0, 0], [1, 0], [1]], 0), ())
    # D_{s_c} s_b = 1/2 [s_c, s_b]
    assert np.allclose(gam, 0.5 * so3.structure(()).transpose(0, 2, 1), atol=1e-15)


@pytest.mark.parametrize("name", METRIC_EXAMPLES)
def test_compatible_and_torsion_free_on_catalog(name, rng):
    cfg = get_example(name)
    A, g = cfg.algebroid(), cfg.metric_obj()
    D = LeviCivitaConnection(A, g)
    pts = random_points(A, 100, rng) if A.n else [np.zeros(0)]
    for x in pts:
        assert np.max(np.abs(compatibility_residual(D, g, A, x))) <= 1e-9
        assert np.max(np.abs(torsion(D, A, x))) <= 1e-9


def test_compatible_on_distribution(distribution, distribution_metric, rng):
    A, _ = distribution
    D = LeviCivitaConnection(A, distribution_metric)
    for x in random_points(A, 30, rng):
        assert np.max(np.abs(compatibility_residual(D, distribution_metric, A, x))) <= 1e-12
        assert np.max(np.abs(torsion(D, A, x))) <= 1e-12


def test_uniqueness_probe(hyperbolic):
    A, g, D = hyperbolic
    x = (0.2, 1.1)
    base = D.coefficients(x)
    for idx in np.ndindex(base.shape):
        pert = base.copy()
        pert[idx] += 1e-3

        class Perturbed:
            n, m, k, linear = 2, 2, 2, True

            def coefficients(self, p, pert=pert):
                return pert

        r1 = np.max(np.abs(compatibility_residual(Perturbed(), g, A, x)))
        r2 = np.max(np.abs(torsion(Perturbed(), A, x)))
        assert max(r1, r2) > 1e-6


def test_singular_metric_names_point(tangent_plane):
    g = RiemannMetric([["x1", "0"], ["1"]], 2)
    with pytest.raises(SingularMetricError) as info:
        levi_civita_coeffs(tangent_plane, g, (0.0, 0.5))
    assert list(info.value.point) == [0.0, 0.5]


def test_dimension_check(tangent_plane):
    with pytest.raises(ValueError):
        LeviCivitaConnection(tangent_plane, RiemannMetric([[1]], 2))


def test_coefficient_jet_matches_finite_difference(distribution, distribution_metric):
    A, _ = distribution
    D = LeviCivitaConnection(A, distribution_metric)
    x = np.array([0.2, -0.4, 0.5])
    _, dgam = D.coefficient_jet(x)
    h = 1e-5
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (D.coefficients(x + e) - D.coefficients(x - e)) / (2 * h)
        assert np.max(np.abs(dgam[..., i] - fd)) <= 1e-8


class TestSpray:
    def test_euclidean_spray_vanishes(self, tangent_plane):
        lag = parse_expr("y1^2 + y2^2", 2, 2)
        assert np.allclose(semispray_coeffs(tangent_plane, lag, (0.3, 0.4), [1.0, -2.0]), 0, atol=1e-15)

    @pytest.mark.parametrize("name", METRIC_EXAMPLES)
    def test_energy_spray_is_half_gamma_yy(self, name, rng):
        cfg = get_example(name)
        A, g = cfg.algebroid(), cfg.metric_obj()
        S = SprayCoefficients(A, g)
        pts = random_points(A, 100, rng) if A.n else [np.zeros(0)] * 100
        for x in pts:
            y = rng.normal(size=A.m)
            assert np.max(np.abs(S(x, y) - S.from_connection(x, y))) <= 1e-9

    def test_energy_spray_on_distribution_general_hessian(self, distribution, distribution_metric, rng):
        A, _ = distribution
        S = SprayCoefficients(A, distribution_metric)
        lag = energy_lagrangian(distribution_metric, 2)
        for x in random_points(A, 20, rng):
            y = rng.normal(size=2)
            # nested-dual Hessian path instead of the closed form 2g
            G = semispray_coeffs(A, lag, x, y)
            assert np.max(np.abs(G - S.from_connection(x, y))) <= 1e-9

    def test_two_homogeneous(self, hyperbolic):
        A, g, _ = hyperbolic
        S = SprayCoefficients(A, g)
        x, y = (0.4, 0.7), np.array([0.3, -1.1])
        assert np.max(np.abs(S(x, 2 * y) - 4 * S(x, y))) <= 1e-10

    def test_singular_lagrangian(self, tangent_plane):
        with pytest.raises(RegularityError):
            semispray_coeffs(tangent_plane, parse_expr("y1^2", 2, 2), (0, 0), [1.0, 1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
    def test_antisymmetric_bracket_kills_yy(self, y):
        L = get_example("so3-point").algebroid().structure(())
        y = np.array(y)
        assert np.max(np.abs(np.einsum("acd,c,d->a", L, y, y))) <= 1e-12 * max(1, np.max(y ** 2))


def test_flat_connection_on_nonflat_metric_is_not_compatible(tangent_plane):
    g = RiemannMetric([["exp(2*x1)", 0], [1]], 2)
    assert np.max(np.abs(compatibility_residual(AConnection.flat(2, 2), g, tangent_plane, (0, 0)))) > 1
    D = LeviCivitaConnection(tangent_plane, g)
    assert np.max(np.abs(compatibility_residual(D, g, tangent_plane, (0, 0)))) <= 1e-14


def test_levi_civita_with_kernel_direction():
    # s1 -> d1, s2 -> exp(x1) d2, s3 central in the kernel; [s1, s2] = s2
    A = LieAlgebroid(2, 3, [[1, 0], [0, "exp(x1)"], [0, 0]], {(0, 1): [0, 1, 0]})
    g = RiemannMetric([["1+x1^2", 0, "0.2"], ["2", 0], ["1+x2^2"]], 2)
    D = LeviCivitaConnection(A, g)
    for x in [(0.1, 0.2), (-0.5, 0.7)]:
        assert np.max(np.abs(compatibility_residual(D, g, A, x))) <= 1e-12
        assert np.max(np.abs(torsion(D, A, x))) <= 1e-12
