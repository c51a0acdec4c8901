import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lieconn import (
    AConnection, LeviCivitaConnection, LieAlgebroid, RiemannMetric, energy, get_example,
    integrate_geodesic, spray_vs_geodesic_check,
)

from .conftest import METRIC_EXAMPLES


def semicircle(t):
    # unit-speed hyperbolic geodesic through (0, 1) with horizontal initial velocity
    return np.stack([np.tanh(t), 1 / np.cosh(t)], axis=1)


def test_euclidean_straight_line(tangent_plane):
    g = RiemannMetric([[1, 0], [1]], 2)
    res = integrate_geodesic(tangent_plane, LeviCivitaConnection(tangent_plane, g),
                             [-0.5, -0.5], [0.3, 0.4], T=2, N=50, g=g)
    t = res.path.t[:, None]
    assert np.allclose(res.path.x, [-0.5, -0.5] + t * [0.3, 0.4], atol=1e-14)
    assert np.allclose(res.path.y, [0.3, 0.4], atol=1e-15)
    assert not res.truncated


class TestHyperbolic:
    def test_endpoint_matches_semicircle(self, hyperbolic):
        A, g, D = hyperbolic
        res = integrate_geodesic(A, D, [0, 1], [1, 0], T=1, N=2000, g=g)
        assert np.max(np.abs(res.path.x[-1] - semicircle(np.array([1.0]))[0])) <= 1e-6

    def test_fourth_order_ratio(self, hyperbolic):
        A, _, D = hyperbolic
        T = 2.5
        exact = semicircle(np.array([T]))[0]
        err = [np.max(np.abs(integrate_geodesic(A, D, [0, 1], [1, 0], T=T, N=N).path.x[-1] - exact))
               for N in (1000, 2000)]
        assert 12 <= err[0] / err[1] <= 20

    def test_vertical_geodesic(self, hyperbolic):
        A, _, D = hyperbolic
        res = integrate_geodesic(A, D, [0, 1], [0, 1], T=1, N=1000)
        assert np.max(np.abs(res.path.x[:, 1] - np.exp(res.path.t))) <= 1e-9
        assert np.array_equal(res.path.x[:, 0], np.zeros(1001))

    def test_truncated_when_leaving_chart(self, hyperbolic):
        A, g, D = hyperbolic
        res = integrate_geodesic(A, D, [0, 1], [0, 1], T=3, N=300, g=g)
        assert res.truncated and "chart" in res.reason
        assert res.path.x[-1, 1] <= 3 and res.path.n_steps < 300
        assert res.to_dict()["truncated"] is True

    def test_homogeneity(self, hyperbolic):
        A, _, D = hyperbolic
        slow = integrate_geodesic(A, D, [0, 1], [0.5, 0.2], T=2, N=2000)
        fast = integrate_geodesic(A, D, [0, 1], [1.0, 0.4], T=1, N=1000)
        assert np.max(np.abs(slow.path.x[::2] - fast.path.x)) <= 1e-9
        assert np.max(np.abs(2 * slow.path.y[::2] - fast.path.y)) <= 1e-9


class TestFiberConfinement:
    def test_so3_geodesic_has_no_base(self, so3):
        g = RiemannMetric([[1, 0, 0], [2, 0], [3]], 0)
        res = integrate_geodesic(so3, LeviCivitaConnection(so3, g), [], [1.0, 0.5, -0.2], N=100, g=g)
        assert res.path.x.shape == (101, 0)
        assert res.energy_drift <= 1e-8

    def test_kernel_start_stays_put_for_levi_civita(self, rank_deficient):
        A, _ = rank_deficient
        g = RiemannMetric([[1, 0], [1]], 2)
        res = integrate_geodesic(A, LeviCivitaConnection(A, g), [0.2, -0.3], [0, 1], N=200)
        assert np.array_equal(res.path.x, np.tile([0.2, -0.3], (201, 1)))

    def test_kernel_start_can_leave_the_fiber(self, rank_deficient):
        # counterexample: Gamma^1_22 = -1 pushes y^1 away from zero, so x moves
        A, D = rank_deficient
        res = integrate_geodesic(A, D, [0.0, 0.0], [0, 1], T=0.5, N=200)
        assert abs(res.path.x[-1, 0]) > 1e-3

    def test_levi_civita_can_leave_the_fiber_too(self):
        # s3 spans the kernel, but g_33 varies along the image direction d2
        A = LieAlgebroid(2, 3, [[1, 0], [0, "exp(x1)"], [0, 0]], {(0, 1): [0, 1, 0]})
        g = RiemannMetric([["1+x1^2", 0, "0.2"], ["2", 0], ["1+x2^2"]], 2)
        res = integrate_geodesic(A, LeviCivitaConnection(A, g), [0.1, 0.5], [0, 0, 1], T=0.5, N=200)
        assert np.max(np.abs(res.path.x - [0.1, 0.5])) > 1e-2


class TestEnergy:
    def test_values(self, hyperbolic):
        _, g, _ = hyperbolic
        euc = RiemannMetric([[1, 0], [1]], 2)
        assert energy(euc, (0, 0), [3, 4]) == 25
        assert energy(euc, (0, 0), [0, 0]) == 0
        assert energy(g, (0, 2), [1, 0]) == 0.25

    def test_bad_length(self, hyperbolic):
        with pytest.raises(ValueError):
            energy(hyperbolic[1], (0, 1), [1.0])

    @pytest.mark.parametrize("name", METRIC_EXAMPLES)
    def test_drift_small_on_catalog(self, name):
        cfg = get_example(name)
        A, g = cfg.algebroid(), cfg.metric_obj()
        x0 = np.asarray(cfg.x0, dtype=float)
        y0 = np.linspace(0.3, -0.2, A.m)
        res = integrate_geodesic(A, LeviCivitaConnection(A, g), x0, y0, T=1, N=1000, g=g)
        assert res.energy_drift <= 1e-8
        assert res.admissibility_residual <= 1e-6


class TestSpray:
    @pytest.mark.parametrize("name", ["euclidean-tm", "hyperbolic-tm", "so3-point"])
    def test_spray_matches_levi_civita(self, name):
        cfg = get_example(name)
        A, g = cfg.algebroid(), cfg.metric_obj()
        y0 = np.linspace(0.5, -0.4, A.m)
        rep = spray_vs_geodesic_check(A, g, np.asarray(cfg.x0, float), y0, T=1, N=500)
        assert rep.max_distance <= 1e-8
        assert set(rep.to_dict()) == {"max_distance", "geodesic", "spray"}


@settings(max_examples=20, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_torsion_part_is_irrelevant(a, b):
    # adding an antisymmetric part to Gamma leaves the geodesic equation alone
    A = LieAlgebroid(2, 2, [[1, 0], [0, 1]])
    sym = AConnection([[["x1", "0"], ["0", "1"]], [["0", "x2"], ["x2", "0"]]], 2, 2)
    skew = AConnection([[["x1", f"{a}"], [f"{-a}", "1"]], [["0", f"x2+{b}"], [f"x2-{b}", "0"]]], 2, 2)
    r1 = integrate_geodesic(A, sym, [0, 0], [0.3, 0.2], T=0.5, N=50)
    r2 = integrate_geodesic(A, skew, [0, 0], [0.3, 0.2], T=0.5, N=50)
    assert np.max(np.abs(r1.path.x - r2.path.x)) <= 1e-12


def test_rejects_nonlinear_connection(tangent_plane):
    with pytest.raises(ValueError):
        integrate_geodesic(tangent_plane, AConnection([[["0", "0"]]], 2, 2), [0, 0], [1, 0])


def test_rejects_start_outside_chart(hyperbolic):
    A, _, D = hyperbolic
    with pytest.raises(ValueError, match="outside"):
        integrate_geodesic(A, D, [0, 5], [1, 0])
