import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lieconn import (
    AConnection, EmptyFamilyError, LeviCivitaConnection, RiemannMetric, curvature,
    generate_loops, get_example, holonomy_matrices, invariant_spd_search, isometry_check,
    lift_base_path, metrizability_test, orthogonality_residual, reconstruct_metric,
)
from lieconn.holonomy import SCALES, coherence_residuals, displacement_isometry_limit
from lieconn.transport import segment_curve

from .conftest import catalog_verdict


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def example(name):
    cfg = get_example(name)
    A = cfg.algebroid()
    return A, cfg.connection_obj(A)


@pytest.fixture(scope="module")
def hyperbolic_sample(hyperbolic):
    A, _, D = hyperbolic
    fam = generate_loops(A, [0, 1], scales=(0.05, 0.1), steps=200)
    return holonomy_matrices(D, A, fam)


class TestLoopGeneration:
    def test_tangent_plane_family(self, tangent_plane):
        fam = generate_loops(tangent_plane, [0, 0])
        kinds = [lp.kind for lp in fam.loops]
        assert kinds.count("rectangle") == len(SCALES) and "vertical" not in kinds
        assert kinds.count("reverse") == len(SCALES)
        assert kinds.count("concatenation") == len(SCALES) - 1
        assert fam.generators == list(range(len(SCALES)))

    def test_loops_are_closed(self, hyperbolic):
        A, _, _ = hyperbolic
        for lp in generate_loops(A, [0, 1], scales=(0.1,)).loops:
            assert np.max(np.abs(lp.path.x[-1] - lp.path.x[0])) <= 1e-12

    def test_rectangle_flips_near_the_boundary(self, hyperbolic):
        A, _, _ = hyperbolic
        fam = generate_loops(A, [0, 2.9], scales=(0.4,), concatenations=False)
        assert fam.loops[0].path.meta["sides"] == [0.4, -0.4]
        assert np.all(fam.loops[0].path.x[:, 1] <= 2.9 + 1e-12)

    def test_point_base_uses_vertical_loops(self, so3):
        fam = generate_loops(so3, [])
        assert [lp.kind for lp in fam.loops].count("vertical") == 3

    def test_vertical_loop_is_half_wave(self, so3):
        lp = generate_loops(so3, [], steps=100).loops[0]
        t = lp.path.t
        assert np.allclose(lp.path.y, np.sin(np.pi * t)[:, None] * lp.path.y[50], atol=1e-14)
        assert np.all(lp.path.y[1:-1] @ lp.path.y[50] > 0)

    def test_rank_deficient_skips_rectangles(self, rank_deficient):
        A, _ = rank_deficient
        fam = generate_loops(A, [0, 0], concatenations=False)
        assert len(fam.skipped) == len(SCALES)
        assert [lp.kind for lp in fam.loops] == ["vertical", "reverse"]

    def test_distribution_has_no_loops(self, distribution):
        A, _ = distribution
        with pytest.raises(EmptyFamilyError, match="no liftable"):
            generate_loops(A, [0, 0, 0])

    def test_step_count_divisible_by_four(self, tangent_plane):
        with pytest.raises(ValueError, match="divisible"):
            generate_loops(tangent_plane, [0, 0], steps=402)


class TestHolonomyMatrices:
    def test_flat_gives_identity(self, tangent_plane):
        D = LeviCivitaConnection(tangent_plane, RiemannMetric([[1, 0], [1]], 2))
        sample = holonomy_matrices(D, tangent_plane, generate_loops(tangent_plane, [0, 0]))
        assert all(np.max(np.abs(H - np.eye(2))) <= 1e-14 for H in sample.matrices)

    @pytest.mark.parametrize("s", [0.05, 0.1])
    def test_curvature_area_law(self, hyperbolic, s):
        A, _, D = hyperbolic
        fam = generate_loops(A, [0, 1], scales=(s,), concatenations=False)
        H = holonomy_matrices(D, A, fam).matrices[0]
        si, sj = fam.loops[0].path.meta["sides"]
        R = curvature(D, A, (si / 2, 1 + sj / 2))[:, :, 0, 1]
        # H - I = -(signed area) R_12 + O(s^3)
        assert np.max(np.abs(H - np.eye(2) + si * sj * R)) <= 0.1 * np.max(np.abs(si * sj * R))

    def test_scaling_holonomy_exact(self):
        A, D = example("scaling-holonomy")
        fam = generate_loops(A, [0, 0], concatenations=False)
        sample = holonomy_matrices(D, A, fam)
        for lp, H in zip(fam.loops, sample.matrices):
            expected = np.exp(-lp.scale ** 2) if lp.kind == "rectangle" else np.exp(lp.scale ** 2)
            assert np.max(np.abs(H - expected * np.eye(2))) <= 1e-9

    def test_products_recorded(self, hyperbolic_sample):
        prods = [m for m in hyperbolic_sample.meta if m["source"] == "product"]
        assert len(prods) == 1
        i, j = prods[0]["factors"]
        idx = hyperbolic_sample.meta.index(prods[0])
        assert np.array_equal(hyperbolic_sample.matrices[idx],
                              hyperbolic_sample.matrices[j] @ hyperbolic_sample.matrices[i])

    def test_coherence(self, hyperbolic_sample):
        res = coherence_residuals(hyperbolic_sample)
        assert res["reverse"] <= 1e-8 and res["concatenation"] <= 1e-10

    def test_sample_dict(self, hyperbolic_sample):
        d = hyperbolic_sample.to_dict()
        assert d["x0"] == [0.0, 1.0] and abs(d["matrices"][0]["det"] - 1) <= 1e-9


class TestSPDSearch:
    def test_identity_sample(self):
        res = invariant_spd_search([np.eye(3)] * 2)
        assert res.found and np.allclose(res.G, np.eye(3) / 3, atol=1e-12)

    def test_rotations(self):
        res = invariant_spd_search([rot(0.3), rot(0.7)])
        assert res.found and np.allclose(res.G, np.eye(2) / 2, atol=1e-10)
        assert res.null_dim == 1

    def test_uniform_scaling_has_no_form(self):
        res = invariant_spd_search([2 * np.eye(2)])
        assert not res.found and res.null_dim == 0

    def test_hyperbolic_diagonal_has_only_indefinite_forms(self):
        res = invariant_spd_search([np.diag([2.0, 0.5])])
        assert not res.found and res.null_dim == 1 and res.min_eigenvalue < 0

    def test_conjugated_rotation(self):
        S = np.array([[2.0, 0.3], [0.0, 1.0]])
        Si = np.linalg.inv(S)
        res = invariant_spd_search([S @ rot(0.4) @ Si, S @ rot(1.1) @ Si])
        expected = Si.T @ Si
        assert np.allclose(res.G, expected / np.trace(expected), atol=1e-9)

    def test_seed_does_not_change_result(self):
        mats = [rot(0.3), rot(0.7)]
        Gs = [invariant_spd_search(mats, seed=s).G for s in range(4)]
        assert all(np.array_equal(Gs[0], G) for G in Gs)

    def test_empty(self):
        with pytest.raises(EmptyFamilyError):
            invariant_spd_search([])

    def test_identity_has_full_null_space(self):
        res = invariant_spd_search([np.eye(2)])
        assert res.null_dim == 3

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(-1, 1), st.floats(0.5, 2))
    def test_recovers_conjugating_metric(self, a, b, c, d):
        S = np.array([[d, c], [0.0, 1.0]])
        Si = np.linalg.inv(S)
        res = invariant_spd_search([S @ rot(a) @ Si, S @ rot(b) @ Si])
        assert res.found
        expected = Si.T @ Si
        assert np.max(np.abs(res.G - expected / np.trace(expected))) <= 1e-6
        assert orthogonality_residual([S @ rot(a) @ Si], res.G) <= 1e-8


class TestIsometry:
    def test_passes_for_true_metric(self, hyperbolic_sample):
        rep = isometry_check(hyperbolic_sample, np.eye(2))
        assert rep.passed and rep.max_residual <= 1e-8

    def test_fails_for_wrong_metric(self, hyperbolic_sample):
        rep = isometry_check(hyperbolic_sample, np.diag([1.0, 2.0]))
        assert not rep.passed and rep.worst_label.startswith(("rect", "reverse", "(", "product"))

    def test_dimension_mismatch(self, hyperbolic_sample):
        with pytest.raises(ValueError):
            isometry_check(hyperbolic_sample, np.eye(3))

    def test_orthogonality(self, hyperbolic_sample):
        assert orthogonality_residual(hyperbolic_sample, np.eye(2)) <= 1e-8


class TestReconstruction:
    def test_flat(self, tangent_plane):
        D = AConnection.flat(2, 2)
        rec = reconstruct_metric(D, tangent_plane, np.eye(2), [0, 0], steps=40)
        assert all(np.array_equal(g, np.eye(2)) for g in rec.metrics)
        assert rec.consistency_residual == 0 and rec.compatibility_residual == 0

    def test_round_trip_hyperbolic(self, hyperbolic):
        A, g, D = hyperbolic
        rec = reconstruct_metric(D, A, g.values((0.0, 1.0)), [0, 1], steps=200)
        err = max(np.max(np.abs(gp - g.values(tuple(p)))) for p, gp in zip(rec.probes, rec.metrics))
        assert err <= 1e-8
        assert rec.consistency_residual <= 1e-8 and rec.compatibility_residual <= 1e-5

    def test_path_dependence_detected(self):
        A, D = example("scaling-holonomy")
        rec = reconstruct_metric(D, A, np.eye(2), [0, 0], steps=200)
        assert rec.consistency_residual >= 1e-3

    def test_unreachable_directions_named(self, rank_deficient):
        A, D = rank_deficient
        rec = reconstruct_metric(D, A, np.eye(2), [0, 0], steps=40)
        assert rec.unreachable_directions == ["x2"] and rec.skipped


class TestVerdicts:
    def test_hyperbolic_metrizable(self, hyperbolic):
        v = catalog_verdict("hyperbolic-tm")
        assert v.kind == "Metrizable"
        _, g, _ = hyperbolic
        g0 = g.values((0.0, 1.0))
        assert np.max(np.abs(v.G0 - g0 / np.trace(g0))) <= 1e-8
        assert v.residuals["compatibility"] <= 1e-5

    def test_euclidean_metrizable(self):
        v = catalog_verdict("euclidean-tm")
        assert v.kind == "Metrizable" and np.allclose(v.G0, np.eye(2) / 2, atol=1e-10)

    def test_so3_metrizable(self):
        v = catalog_verdict("so3-point")
        assert v.kind == "Metrizable" and np.allclose(v.G0, np.eye(3) / 3, atol=1e-9)

    def test_so3_anisotropic(self, so3):
        g = RiemannMetric([[1, 0, 0], [2, 0], [3]], 0)
        v = metrizability_test(LeviCivitaConnection(so3, g), so3, [])
        assert v.kind == "Metrizable" and np.allclose(6 * v.G0, np.diag([1, 2, 3]), atol=1e-8)

    def test_scaling_not_metrizable(self):
        v = catalog_verdict("scaling-holonomy")
        assert v.kind == "NotMetrizable"
        assert v.witness["certificate"] == "determinant"
        assert abs(v.witness["det"] - np.exp(-2 * 0.05 ** 2)) <= 1e-9

    def test_rank_deficient_inconclusive(self):
        v = catalog_verdict("rank-deficient-anchor")
        assert v.kind == "Inconclusive" and "x2" in v.reason

    def test_distribution_inconclusive(self):
        v = catalog_verdict("distribution")
        assert v.kind == "Inconclusive" and v.G0 is None

    def test_no_invariant_form_certificate(self, so3):
        # constant Gamma_1 = diag(1, -1, 0): the vertical loop gives diag(e^a, e^-a, 1), det 1, no SPD form
        blocks = [[["0"] * 3 for _ in range(3)] for _ in range(3)]
        blocks[0][0][0], blocks[1][1][0] = "1", "-1"
        D = AConnection(blocks, 0, 3)
        v = metrizability_test(D, so3, [])
        assert v.kind == "NotMetrizable" and v.witness["certificate"] == "min_eigenvalue"

    def test_deterministic(self, so3):
        g = RiemannMetric([[1, 0, 0], [2, 0], [3]], 0)
        D = LeviCivitaConnection(so3, g)
        assert metrizability_test(D, so3, []).to_dict() == metrizability_test(D, so3, []).to_dict()


class TestDisplacementLimit:
    def test_compatible_pair_goes_to_zero(self, hyperbolic):
        A, g, D = hyperbolic
        base, vel = segment_curve([0, 1], [0.4, 1.3])
        path = lift_base_path(A, base, 640, velocity=vel)
        _, q = displacement_isometry_limit(D, A, g, path)
        assert np.max(q) <= 1e-8

    def test_incompatible_pair_tends_to_defect(self):
        A, D = example("scaling-holonomy")
        g = RiemannMetric([[1, 0], [1]], 2)
        base, vel = segment_curve([0.5, 0], [0.5, 0.5])
        path = lift_base_path(A, base, 640, velocity=vel)
        ts, q = displacement_isometry_limit(D, A, g, path)
        # y = (0, 0.5), so |D_y g| = 2 * x1 * 0.5 = 0.5 at the start; the error shrinks like t
        errs = np.abs(q - 0.5)
        assert errs[-1] <= 0.01 and errs[-1] < errs[0]
