"""Geodesic flow, exponential map and distance oracle."""

from .geodesic import (
    GeodesicTrace,
    DistanceResult,
    DistanceOptions,
    FlowResult,
    exp_map,
    exp_batch,
    integrate_geodesic,
    integrate_flow,
    initial_frames,
    identity_jacobi,
    parallel_frame,
    raise_for_status,
    distance,
    clear_distance_cache,
    get_distance_cache_info,
    export_trace_csv,
)

__all__ = [
    "GeodesicTrace",
    "DistanceResult",
    "DistanceOptions",
    "FlowResult",
    "exp_map",
    "exp_batch",
    "integrate_geodesic",
    "integrate_flow",
    "initial_frames",
    "identity_jacobi",
    "parallel_frame",
    "raise_for_status",
    "distance",
    "clear_distance_cache",
    "get_distance_cache_info",
    "export_trace_csv",
]
