"""Utils module for mtwgeo package."""

from .utils import (
    rk4_integrate,
    richardson,
    orthonormal_frame,
    angle_grid,
    parallel_map,
    to_jsonable,
    write_json,
    write_csv,
    parse_vector,
    STATUS_OK,
    STATUS_CHART_EXIT,
    STATUS_NON_FINITE,
)

__all__ = [
    "rk4_integrate",
    "richardson",
    "orthonormal_frame",
    "angle_grid",
    "parallel_map",
    "to_jsonable",
    "write_json",
    "write_csv",
    "parse_vector",
    "STATUS_OK",
    "STATUS_CHART_EXIT",
    "STATUS_NON_FINITE",
]
