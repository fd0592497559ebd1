"""
Type definitions for the mtwgeo package.

This module contains the TypedDict shapes of every JSON-facing report. Numeric
containers that carry arrays live next to the operations that produce them and
convert to these shapes through ``to_dict()``.
"""

from typing import Any, Dict, List, Optional, TypedDict, Union

from typing_extensions import NotRequired

# "inf" / "-inf" markers replace non-finite floats in serialized reports
JsonFloat = Union[float, str, None]


class ManifoldDeclaration(TypedDict):
    """Manifold declaration file: {"type": ..., "params": {...}}."""

    type: str
    params: Dict[str, Any]


class Diagnostic(TypedDict):
    """One schema or range problem found by scenario validation."""

    field: str
    code: str
    message: str
    line: NotRequired[int]


class OperationError(TypedDict):
    """Structured per-item failure, recorded instead of raised."""

    success: bool
    error: str
    error_code: str
    operation: NotRequired[str]
    index: NotRequired[int]


class FocalReportDict(TypedDict):
    t_f: JsonFloat
    focal_direction: Optional[List[float]]
    multiplicity: int
    bisection_width: JsonFloat
    min_singular_value: JsonFloat


class CutReportDict(TypedDict):
    """Cut time along one unit direction and the competing minimizers."""

    direction: List[float]
    t_cut: float
    t_f: JsonFloat
    delta_v: float
    multiplicity: int
    purely_focal: bool
    focal_cut: bool
    cap_reached: bool
    competing_velocities: List[List[float]]


class MtwEvaluationDict(TypedDict):
    value: float
    plain_value: float
    richardson_estimate: Optional[float]
    error_estimate: Optional[float]
    step_t: float
    step_s: float
    extended: bool


class GridSpec(TypedDict, total=False):
    """Sample grid of an MTW scan; v radii are fractions of t_cut."""

    x_points: List[List[float]]
    radii: List[float]
    n_directions: int
    n_pairs: int
    include_oblique: bool


class ZSpec(TypedDict, total=False):
    """Tangent-space set Z on which the extended tensor bound is fitted."""

    mode: str
    mu: float
    a: float
    center: float
    n_directions: int
    n_radii: int
    n_pairs: int


class ScanReport(TypedDict):
    """Minimum of the MTW tensor over orthogonal unit pairs on a grid."""

    grid: GridSpec
    n_evaluated: int
    n_skipped: int
    n_errors: int
    min_value: JsonFloat
    argmin: Optional[Dict[str, Any]]
    tolerance: float
    passed: bool
    errors: List[OperationError]
    samples: NotRequired[List[Dict[str, Any]]]


class KCFit(TypedDict):
    K: JsonFloat
    C: float
    cap_hit: bool
    c_max: float
    n_samples: int


class TenseurineFit(TypedDict):
    """Smallest (C, D) with extended tensor >= -C|<xi,eta>| - D rho |xi|^2|eta|^2."""

    C: JsonFloat
    D: JsonFloat
    feasible: bool
    n_samples: int
    noise_floor: float
    violations: List[Dict[str, Any]]


class LemmaFit(TypedDict):
    """Fitted constant of a sampled inequality and the samples violating it."""

    K: JsonFloat
    n_samples: int
    n_skipped: int
    violations: List[Dict[str, Any]]
    passed: bool
    K_tfl: NotRequired[JsonFloat]
    flagged: NotRequired[List[int]]


class LipschitzProbeReport(TypedDict):
    mode: str
    epsilons: List[float]
    quotients: List[JsonFloat]
    max_quotient: JsonFloat
    stable: bool
    incomplete: bool
    second_upper: NotRequired[List[JsonFloat]]
    second_lower: NotRequired[List[JsonFloat]]
    skipped: NotRequired[int]


class NonfocalityReport(TypedDict):
    nonfocal: bool
    min_margin: JsonFloat
    delta_tm: JsonFloat
    n_unresolved: int
    margins: List[List[JsonFloat]]
    tolerance: float


class LipcontrolReport(TypedDict):
    K: JsonFloat
    n_samples: int
    n_flagged: int
    max_source_ratio: JsonFloat
    max_target_ratio: JsonFloat


class DiffIneqReport(TypedDict):
    lemma: str
    c: float
    C: float
    hypothesis_ok: bool
    conclusion_ok: bool
    falsified: bool
    inconclusive: bool
    kinks: List[float]
    max_excess: JsonFloat
    readings: NotRequired[Dict[str, bool]]
    sup_bound_ok: NotRequired[Optional[bool]]


class SemiconvexityReportDict(TypedDict):
    mode: str
    delta_distance: JsonFloat
    delta_radial: JsonFloat
    kstar: JsonFloat
    locality_nu: JsonFloat
    convex: bool
    kappa: Optional[JsonFloat]
    n_pairs: int
    violations: List[Dict[str, Any]]


class CheckResult(TypedDict):
    """One pass/fail entry of a run summary."""

    operation: str
    tolerance: float
    passed: bool
    value: Any


class OperationResult(TypedDict):
    operation: str
    success: bool
    data: NotRequired[Any]
    error: NotRequired[str]
    error_code: NotRequired[str]


class ScenarioDict(TypedDict, total=False):
    manifold: Union[str, ManifoldDeclaration]
    command: str
    options: Dict[str, Any]
    outputs: Dict[str, Any]
    seed: int


class RunReport(TypedDict):
    schema_version: str
    tool_version: str
    scenario: ScenarioDict
    results: List[OperationResult]
    summary: Dict[str, CheckResult]
    errors: List[OperationError]
    failures: List[str]
    wall_time: float
