"""Jacobi fields, focal times and Lagrangian graphs."""

from .jacobi import (
    FundamentalSolutions,
    FocalReport,
    Splitting,
    LagrangianGraph,
    integrate_fundamental,
    fundamental_batch,
    default_horizon,
    grid_index,
    focal_time,
    focal_times_batch,
    verify_jacobi_vs_exp,
    symplectic_defect,
    max_symplectic_defect,
    jacobi_field,
    reconstruction_residual,
    focal_splitting,
    lagrangian_graph,
    sdot_probe,
    sdot_minimum,
    focal_lipschitz_probe,
    quotients_stable,
    export_solutions_csv,
)

__all__ = [
    "FundamentalSolutions",
    "FocalReport",
    "Splitting",
    "LagrangianGraph",
    "integrate_fundamental",
    "fundamental_batch",
    "default_horizon",
    "grid_index",
    "focal_time",
    "focal_times_batch",
    "verify_jacobi_vs_exp",
    "symplectic_defect",
    "max_symplectic_defect",
    "jacobi_field",
    "reconstruction_residual",
    "focal_splitting",
    "lagrangian_graph",
    "sdot_probe",
    "sdot_minimum",
    "focal_lipschitz_probe",
    "quotients_stable",
    "export_solutions_csv",
]
