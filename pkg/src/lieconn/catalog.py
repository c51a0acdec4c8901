"""Builtin example problems."""
from __future__ import annotations

from .config import ProblemConfig

__all__ = ["CATALOG", "get_example", "example_names"]

_TM2 = [[1, 0], [0, 1]]

CATALOG = {
    "euclidean-tm": {
        "description": "tangent bundle of the plane, identity anchor, Euclidean metric",
        "base_dim": 2, "fiber_rank": 2,
        "domain": [[-1, 1], [-1, 1]],
        "anchor": _TM2,
        "metric": [[1, 0], [1]],
        "connection": "levi-civita",
        "x0": [0, 0],
    },
    "distribution": {
        "description": "integrable rank-2 subbundle of TR^3 spanned by d1 and exp(x1)(d2 + d3)",
        "base_dim": 3, "fiber_rank": 2,
        "domain": [[-1, 1], [-1, 1], [-1, 1]],
        "anchor": [[1, 0, 0], [0, "exp(x1)", "exp(x1)"]],
        # [s_1, s_2] = s_2, stored as L^2_21 = -1
        "brackets": [[[], [0]], [[], [-1]]],
        "connection": [[["x2", "0.5"], ["0", "x1*x3"]], [["1", "0"], ["sin(x3)", "x1"]]],
        "x0": [0, 0, 0],
    },
    "so3-point": {
        "description": "the Lie algebra so(3) over a point with the bi-invariant metric",
        "base_dim": 0, "fiber_rank": 3,
        "domain": [],
        "anchor": [[], [], []],
        # [s_a, s_b] = eps_abc s_c
        "brackets": [[[], [0], [0, -1]], [[], [0], [1, 0]], [[], [-1], [0, 0]]],
        "metric": [[1, 0, 0], [1, 0], [1]],
        "connection": "levi-civita",
        "x0": [],
    },
    "hyperbolic-tm": {
        "description": "tangent bundle of the upper half-plane with the hyperbolic metric",
        "base_dim": 2, "fiber_rank": 2,
        "domain": [[-2, 2], [0.1, 3]],
        "anchor": _TM2,
        "metric": [["1/x2^2", 0], ["1/x2^2"]],
        "connection": "levi-civita",
        "x0": [0, 1],
    },
    "scaling-holonomy": {
        "description": "tangent bundle of the plane with Gamma_2 = x1 * identity; curvature is the identity",
        "base_dim": 2, "fiber_rank": 2,
        "domain": [[-1, 1], [-1, 1]],
        "anchor": _TM2,
        "metric": [[1, 0], [1]],
        "connection": [[[0, "x1"], [0, 0]], [[0, 0], [0, "x1"]]],
        "x0": [0, 0],
    },
    "rank-deficient-anchor": {
        "description": "anchor of rank one; flat connection rotating the fiber along the kernel",
        "base_dim": 2, "fiber_rank": 2,
        "domain": [[-1, 1], [-1, 1]],
        "anchor": [[1, 0], [0, 0]],
        "connection": [[[0, 0], [0, -1]], [[0, 1], [0, 0]]],
        "x0": [0, 0],
    },
}


def example_names():
    return sorted(CATALOG)


def get_example(name: str) -> ProblemConfig:
    if name not in CATALOG:
        raise KeyError(f"unknown example {name!r}; choose from {', '.join(example_names())}")
    return ProblemConfig.from_dict({"name": name, **CATALOG[name]})
