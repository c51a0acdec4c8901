from functools import lru_cache

import numpy as np
import pytest

from lieconn import (
    LeviCivitaConnection, LieAlgebroid, MetrizeOptions, RiemannMetric, get_example,
    metrizability_test,
)

ACCEPTANCE_LINES = []

METRIC_EXAMPLES = ["euclidean-tm", "so3-point", "hyperbolic-tm", "scaling-holonomy"]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def hyperbolic():
    cfg = get_example("hyperbolic-tm")
    A = cfg.algebroid()
    g = cfg.metric_obj()
    return A, g, LeviCivitaConnection(A, g)


@pytest.fixture(scope="session")
def tangent_plane():
    return LieAlgebroid(2, 2, [[1, 0], [0, 1]], name="tm")


@pytest.fixture(scope="session")
def so3():
    return get_example("so3-point").algebroid()


@pytest.fixture(scope="session")
def rank_deficient():
    cfg = get_example("rank-deficient-anchor")
    A = cfg.algebroid()
    return A, cfg.connection_obj(A)


@pytest.fixture(scope="session")
def distribution():
    cfg = get_example("distribution")
    A = cfg.algebroid()
    return A, cfg.connection_obj(A)


@pytest.fixture(scope="session")
def distribution_metric(distribution):
    A, _ = distribution
    return RiemannMetric([["1+x3^2", "0.1*x1"], ["2+sin(x2)"]], 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_points(A, count, rng, margin=0.0):
    lo = np.array([d[0] + margin for d in A.domain])
    hi = np.array([d[1] - margin for d in A.domain])
    return [lo + (hi - lo) * rng.random(A.n) for _ in range(count)]


@lru_cache(maxsize=None)
def catalog_verdict(name):
    """Metrizability verdict for a catalog example at its stored base point (cached per session)."""
    cfg = get_example(name)
    A = cfg.algebroid()
    D = cfg.connection_obj(A)
    return metrizability_test(D, A, cfg.base_point(), MetrizeOptions(seed=cfg.seed))
