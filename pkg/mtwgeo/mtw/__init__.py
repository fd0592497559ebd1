"""MTW tensor, extended cost and sampled MTW conditions."""

from .mtw import (
    MtwEvaluation,
    ExtendedCostContext,
    GRID_PRESETS,
    SCAN_CUT_TOL,
    SCAN_FAN_DIRECTIONS,
    make_extended_cost_context,
    extended_cost,
    mtw_tensor,
    extended_mtw_tensor,
    default_x_points,
    resolve_grid,
    mtw_condition_scan,
    mtw_kc_fit,
    tenseurine_constants,
    loeper_check,
    export_scan_csv,
)

__all__ = [
    "MtwEvaluation",
    "ExtendedCostContext",
    "GRID_PRESETS",
    "SCAN_CUT_TOL",
    "SCAN_FAN_DIRECTIONS",
    "make_extended_cost_context",
    "extended_cost",
    "mtw_tensor",
    "extended_mtw_tensor",
    "default_x_points",
    "resolve_grid",
    "mtw_condition_scan",
    "mtw_kc_fit",
    "tenseurine_constants",
    "loeper_check",
    "export_scan_csv",
]
