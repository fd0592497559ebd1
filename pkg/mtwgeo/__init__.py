"""
mtwgeo - Cut loci, focal times and MTW tensors on Riemannian surfaces
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

Numerical toolkit around the regularity theory of optimal transport on
Riemannian manifolds: geodesics and Jacobi fields, focal and cut times,
injectivity domains, the Ma-Trudinger-Wang tensor (standard and extended
beyond the cut locus) and the convexity of injectivity domains.

Basic usage:
    >>> from mtwgeo import load_manifold, cut_time, TangentVector
    >>> torus = load_manifold("torus_2pi")
    >>> report = cut_time(torus, [0, 0], TangentVector([0, 0], [1, 0]))
    >>> round(report.t_cut, 6)
    3.141593

Worker count via environment variable:
    $ export MTWGEO_THREADS=4
"""

from .config import (
    set_worker_count,
    get_worker_count,
    clear_worker_count,
    set_setting,
    get_setting,
    get_settings,
    reset_settings,
)
from .errors import GeometryError
from .manifold import (
    ManifoldModel,
    TangentVector,
    load_manifold,
    builtin_names,
    sectional_curvature,
)
from .geodesic import exp_map, distance, integrate_geodesic
from .jacobi import integrate_fundamental, focal_time
from .cutlocus import cut_time, domain_sample, radial_distance
from .mtw import mtw_tensor, extended_mtw_tensor, make_extended_cost_context, mtw_condition_scan
from .convexity import segment_trace, semiconvexity_test

__version__ = "0.1.0"

__all__ = [
    # Configuration
    "set_worker_count",
    "get_worker_count",
    "clear_worker_count",
    "set_setting",
    "get_setting",
    "get_settings",
    "reset_settings",
    # Errors
    "GeometryError",
    # Manifolds and geodesics
    "ManifoldModel",
    "TangentVector",
    "load_manifold",
    "builtin_names",
    "sectional_curvature",
    "exp_map",
    "distance",
    "integrate_geodesic",
    # Jacobi fields and cut loci
    "integrate_fundamental",
    "focal_time",
    "cut_time",
    "domain_sample",
    "radial_distance",
    # MTW tensor and convexity
    "mtw_tensor",
    "extended_mtw_tensor",
    "make_extended_cost_context",
    "mtw_condition_scan",
    "segment_trace",
    "semiconvexity_test",
]
