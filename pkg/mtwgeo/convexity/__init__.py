"""Segment functions, differential inequalities and semiconvexity of domains."""

from .convexity import (
    SegmentTrace,
    DiffIneqCheck,
    SemiconvexityReport,
    LEMMAS,
    segment_trace,
    detect_kinks,
    hdot_check,
    hddot_check,
    export_segment_csv,
    check_lemineq,
    check_lemineqbis,
    check_lemineqbism,
    sharp_bis_bound,
    generate_admissible_profiles,
    semiconvexity_test,
    verify_lipcontrol,
)

__all__ = [
    "SegmentTrace",
    "DiffIneqCheck",
    "SemiconvexityReport",
    "LEMMAS",
    "segment_trace",
    "detect_kinks",
    "hdot_check",
    "hddot_check",
    "export_segment_csv",
    "check_lemineq",
    "check_lemineqbis",
    "check_lemineqbism",
    "sharp_bis_bound",
    "generate_admissible_profiles",
    "semiconvexity_test",
    "verify_lipcontrol",
]
