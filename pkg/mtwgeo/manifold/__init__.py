"""Manifold models: charts, metrics, connection and curvature."""

from .manifold import (
    ChartSpec,
    TangentVector,
    ManifoldModel,
    RevolutionProfile,
    SphereRotation,
    metric_at,
    christoffel_at,
    riemann_at,
    sectional_curvature,
    gaussian_curvature,
    norm,
    inner,
    frame_at,
    reduce_point,
    chart_difference,
    in_domain,
    outside_mask,
    check_metric,
    christoffel_field,
    riemann_field,
    curvature_operator,
    sphere_model,
    flat_torus_model,
    revolution_model,
    load_manifold,
    model_from_declaration,
    validate_declaration,
    builtin_names,
    BUILTIN_DECLARATIONS,
    MANIFOLD_TYPES,
)

__all__ = [
    "ChartSpec",
    "TangentVector",
    "ManifoldModel",
    "RevolutionProfile",
    "SphereRotation",
    "metric_at",
    "christoffel_at",
    "riemann_at",
    "sectional_curvature",
    "gaussian_curvature",
    "norm",
    "inner",
    "frame_at",
    "reduce_point",
    "chart_difference",
    "in_domain",
    "outside_mask",
    "check_metric",
    "christoffel_field",
    "riemann_field",
    "curvature_operator",
    "sphere_model",
    "flat_torus_model",
    "revolution_model",
    "load_manifold",
    "model_from_declaration",
    "validate_declaration",
    "builtin_names",
    "BUILTIN_DECLARATIONS",
    "MANIFOLD_TYPES",
]
