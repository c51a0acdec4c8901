"""Connections, parallel transport, geodesics and holonomy on Lie algebroids."""
from .algebroid import (
    LieAlgebroid, ValidationReport, anchor_matrix, check_structure_identities, lattice_points,
    sample_points,
)
from .catalog import CATALOG, example_names, get_example
from .config import ConfigError, ProblemConfig
from .connection import (
    AConnection, DimensionError, RiemannMetric, SectionField, compatibility_residual,
    covariant_derivative, curvature, curvature_nested, sectional_curvature, torsion,
)
from .geodesics import GeodesicResult, energy, integrate_geodesic, spray_vs_geodesic_check
from .holonomy import (
    EmptyFamilyError, HolonomySample, LoopFamily, MetrizabilityVerdict, MetrizeOptions,
    generate_loops, holonomy_matrices, invariant_spd_search, isometry_check,
    metrizability_test, orthogonality_residual, reconstruct_metric,
)
from .levi_civita import (
    LeviCivitaConnection, SingularMetricError, SprayCoefficients, energy_lagrangian,
    levi_civita_coeffs, semispray_coeffs,
)
from .scalar_field import (
    CoordPoint, DomainError, Expr, ExprError, ExprSyntaxError, UnknownIdentifierError,
    VariableRangeError, evaluate, parse_expr, partial,
)
from .transport import (
    AlphaSection, APath, NotLiftableError, NotVerticalError, TransportMap,
    covariant_derivative_along, lift_base_path, make_vertical_path, parallel_transport,
    transport_limit_check, transport_map,
)

__version__ = "0.1.0"

__all__ = [
    "AConnection",
    "AlphaSection",
    "anchor_matrix",
    "APath",
    "CATALOG",
    "check_structure_identities",
    "compatibility_residual",
    "ConfigError",
    "CoordPoint",
    "covariant_derivative",
    "covariant_derivative_along",
    "curvature",
    "curvature_nested",
    "DimensionError",
    "DomainError",
    "EmptyFamilyError",
    "energy",
    "energy_lagrangian",
    "evaluate",
    "example_names",
    "Expr",
    "ExprError",
    "ExprSyntaxError",
    "generate_loops",
    "GeodesicResult",
    "get_example",
    "holonomy_matrices",
    "HolonomySample",
    "integrate_geodesic",
    "invariant_spd_search",
    "isometry_check",
    "lattice_points",
    "levi_civita_coeffs",
    "LeviCivitaConnection",
    "LieAlgebroid",
    "lift_base_path",
    "LoopFamily",
    "make_vertical_path",
    "metrizability_test",
    "MetrizabilityVerdict",
    "MetrizeOptions",
    "NotLiftableError",
    "NotVerticalError",
    "orthogonality_residual",
    "parallel_transport",
    "parse_expr",
    "partial",
    "ProblemConfig",
    "reconstruct_metric",
    "RiemannMetric",
    "sample_points",
    "sectional_curvature",
    "SectionField",
    "semispray_coeffs",
    "SingularMetricError",
    "spray_vs_geodesic_check",
    "SprayCoefficients",
    "torsion",
    "transport_limit_check",
    "transport_map",
    "TransportMap",
    "UnknownIdentifierError",
    "ValidationReport",
    "VariableRangeError",
]
