"""
Command-line front end for mtwgeo.

Every command builds a scenario, either from flags or from a JSON scenario
file (``mtwgeo run --scenario file.json``), executes the mapped operations and
produces a RunReport. Operation errors are collected into the report, never
dropped; the exit status is 0 only when no check failed and no error was
collected.

Usage:
    $ mtwgeo verify --manifold sphere_r1 --suite core
    $ mtwgeo domain --manifold torus_2pi --x 0,0 --n 360 --svg out.svg
    $ mtwgeo mtw-scan --manifold dumbbell --grid coarse --out results/
"""

import argparse
import copy
import json
import logging
import math
import sys
import time
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .. import __version__
from ..convexity import (
    check_lemineq,
    check_lemineqbis,
    check_lemineqbism,
    export_segment_csv,
    generate_admissible_profiles,
    hddot_check,
    hdot_check,
    segment_trace,
    semiconvexity_test,
)
from ..cutlocus import (
    CutOptions,
    cut_time,
    domain_sample,
    export_domain_csv,
    nonfocality_report,
    plot_domain_svg,
    verify_lem1,
    verify_lem2,
)
from ..errors import GeometryError, PreconditionError, ScenarioError
from ..geodesic import export_trace_csv, integrate_geodesic
from ..jacobi import (
    default_horizon,
    export_solutions_csv,
    focal_time,
    focal_times_batch,
    fundamental_batch,
    integrate_fundamental,
    max_symplectic_defect,
    verify_jacobi_vs_exp,
)
from ..manifold import (
    BUILTIN_DECLARATIONS,
    ManifoldModel,
    TangentVector,
    check_metric,
    frame_at,
    gaussian_curvature,
    load_manifold,
    norm,
    validate_declaration,
)
from ..mtw import (
    GRID_PRESETS,
    default_x_points,
    export_scan_csv,
    extended_mtw_tensor,
    loeper_check,
    make_extended_cost_context,
    mtw_condition_scan,
    mtw_kc_fit,
    mtw_tensor,
)
from ..types import CheckResult, Diagnostic, OperationError, OperationResult, RunReport, ScenarioDict
from ..utils import angle_grid, parse_vector, to_jsonable, write_json

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
COMMANDS = (
    "geodesic",
    "focal",
    "cut",
    "domain",
    "mtw-scan",
    "tensor",
    "segment",
    "convexity",
    "verify",
)
SUITES = ("core", "full")
SUITE_SIZES: Dict[str, Dict[str, Any]] = {
    "core": {
        "directions": 8,
        "domain_n": 72,
        "jacobi_samples": 10,
        "profiles": 100,
        "loeper_pairs": 4,
        "grid": "coarse",
    },
    "full": {
        "directions": 32,
        "domain_n": 360,
        "jacobi_samples": 50,
        "profiles": 1000,
        "loeper_pairs": 16,
        "grid": "fine",
    },
}

VECTOR_OPTIONS = ("x", "v", "w", "xi", "eta")
POSITIVE_FLOAT_OPTIONS = ("step", "tol", "t_max", "nu")
NONNEGATIVE_FLOAT_OPTIONS = ("c", "C")
POSITIVE_INT_OPTIONS = ("n", "stride")
ENUM_OPTIONS = {"suite": SUITES, "mode": ("radial", "distance")}
REQUIRED_OPTIONS = {
    "geodesic": ("v",),
    "focal": ("v",),
    "cut": ("v",),
    "tensor": ("v", "xi", "eta"),
    "segment": ("v", "w"),
}
MIN_N = {"domain": 8, "convexity": 8, "segment": 32}

# Tolerances of the verification suite
FOCAL_CUT_TOL = 1e-6
SYMPLECTIC_TOL = 1e-8
JACOBI_EXP_TOL = 1e-4
LOEPER_TOL = 2e-3
CONVEXITY_TOL = 1e-6
METRIC_SYMMETRY_TOL = 1e-12
NONFOCAL_EXPECTED = {"flat_torus": True, "sphere": False}


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


def _field_line(text: Optional[str], key: str) -> Optional[int]:
    """First line of the raw scenario text mentioning a quoted key."""
    if text is None:
        return None
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def _diag(field: str, code: str, message: str, text: Optional[str] = None) -> Diagnostic:
    diag: Diagnostic = {"field": field, "code": code, "message": message}
    line = _field_line(text, field.split(".")[-1])
    if line is not None:
        diag["line"] = line
    return diag


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _check_option(name: str, value: Any) -> Optional[Tuple[str, str]]:
    """(code, message) for an invalid option value, or None."""
    if name in VECTOR_OPTIONS:
        try:
            _vector(value)
        except (TypeError, ValueError) as e:
            return "TYPE", f"options.{name} must be a list of numbers: {e}"
        return None
    if name in POSITIVE_FLOAT_OPTIONS:
        if not _is_number(value) or value <= 0:
            return "RANGE", f"options.{name} must be a positive number, got {value!r}"
        return None
    if name in NONNEGATIVE_FLOAT_OPTIONS:
        if not _is_number(value) or value < 0:
            return "RANGE", f"options.{name} must be a nonnegative number, got {value!r}"
        return None
    if name in POSITIVE_INT_OPTIONS:
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            return "RANGE", f"options.{name} must be a positive integer, got {value!r}"
        return None
    if name in ENUM_OPTIONS:
        if value not in ENUM_OPTIONS[name]:
            return "ENUM", f"options.{name} must be one of {', '.join(ENUM_OPTIONS[name])}, got {value!r}"
        return None
    if name == "grid":
        if isinstance(value, str) and value not in GRID_PRESETS:
            return "ENUM", f"options.grid must be one of {', '.join(GRID_PRESETS)} or a grid object"
        if not isinstance(value, (str, dict)):
            return "TYPE", "options.grid must be a preset name or a grid object"
        return None
    if name in ("t",):
        if not _is_number(value) or not 0 < value < 1:
            return "RANGE", f"options.t must lie in (0, 1), got {value!r}"
        return None
    if name in ("extended", "fit"):
        if not isinstance(value, bool):
            return "TYPE", f"options.{name} must be true or false"
        return None
    return "UNKNOWN", f"Unknown option {name!r}"


def validate_scenario(scenario: Any, text: Optional[str] = None) -> List[Diagnostic]:
    """
    Schema and range diagnostics of a scenario, without executing it.

    Args:
        scenario: Parsed scenario object
        text: Raw scenario text, used to attach line numbers

    Returns:
        List of diagnostics; empty when the scenario is valid
    """
    if not isinstance(scenario, dict):
        return [_diag("scenario", "TYPE", "Scenario must be an object")]

    diags: List[Diagnostic] = []
    manifold = scenario.get("manifold")
    if manifold is None:
        diags.append(_diag("manifold", "MISSING", "Scenario needs a manifold", text))
    elif isinstance(manifold, dict):
        for d in validate_declaration(manifold):
            line = _field_line(text, d["field"].split(".")[-1])
            if line is not None:
                d["line"] = line
            diags.append(d)
    elif isinstance(manifold, str):
        if manifold not in BUILTIN_DECLARATIONS and not Path(manifold).exists():
            valid = ", ".join(sorted(BUILTIN_DECLARATIONS))
            diags.append(
                _diag("manifold", "ENUM", f"Unknown manifold {manifold!r}; built-in names: {valid}", text)
            )
    else:
        diags.append(_diag("manifold", "TYPE", "manifold must be a name, path or declaration", text))

    command = scenario.get("command")
    if command not in COMMANDS:
        diags.append(
            _diag("command", "ENUM", f"Unknown command {command!r}; valid commands: {', '.join(COMMANDS)}", text)
        )

    options = scenario.get("options", {})
    if not isinstance(options, dict):
        diags.append(_diag("options", "TYPE", "options must be an object", text))
        options = {}
    for name in sorted(options):
        problem = _check_option(name, options[name])
        if problem is not None:
            diags.append(_diag(f"options.{name}", problem[0], problem[1], text))
    for name in REQUIRED_OPTIONS.get(str(command), ()):
        if name not in options:
            diags.append(_diag(f"options.{name}", "MISSING", f"Command {command} needs options.{name}", text))
    minimum = MIN_N.get(str(command))
    if minimum is not None and isinstance(options.get("n"), int) and options["n"] < minimum:
        diags.append(_diag("options.n", "RANGE", f"Command {command} needs n >= {minimum}", text))

    seed = scenario.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        diags.append(_diag("seed", "RANGE", f"seed must be a nonnegative integer, got {seed!r}", text))

    outputs = scenario.get("outputs", {})
    if not isinstance(outputs, dict) or any(not isinstance(outputs.get(k, ""), str) for k in ("dir", "svg")):
        diags.append(_diag("outputs", "TYPE", "outputs must map dir/svg to paths", text))
    return diags


def load_scenario(path: str) -> ScenarioDict:
    """
    Read a JSON scenario file.

    Raises:
        OSError: If the file cannot be read
        ScenarioError: If the file is not a JSON object (with the line number)
    """
    with open(path, "r") as f:
        text = f.read()
    try:
        scenario = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"Malformed scenario {path}: {e.msg}", field="scenario", line=e.lineno) from e
    if not isinstance(scenario, dict):
        raise ScenarioError(f"Scenario {path} must be a JSON object", field="scenario", line=1)
    return scenario  # type: ignore[return-value]


def validate(scenario_path: str) -> List[Diagnostic]:
    """
    Diagnostics of a scenario file.

    Raises:
        OSError: If the file cannot be read
    """
    with open(scenario_path, "r") as f:
        text = f.read()
    try:
        scenario = json.loads(text)
    except json.JSONDecodeError as e:
        return [{"field": "scenario", "code": "PARSE", "message": e.msg, "line": e.lineno}]
    return validate_scenario(scenario, text)


def _vector(value: Any) -> np.ndarray:
    if isinstance(value, str):
        return parse_vector(value)
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ValueError(f"Invalid vector {value!r}")
    return arr


def scenario_from_args(args: argparse.Namespace, base: Optional[ScenarioDict] = None) -> ScenarioDict:
    """Merge command-line flags over a scenario (flags win)."""
    scenario: Dict[str, Any] = copy.deepcopy(dict(base)) if base else {}
    if args.command != "run":
        scenario["command"] = args.command
    if args.manifold is not None:
        scenario["manifold"] = args.manifold
    if args.seed is not None:
        scenario["seed"] = args.seed
    scenario.setdefault("seed", 0)

    options = dict(scenario.get("options", {}))
    for name in VECTOR_OPTIONS:
        value = getattr(args, name, None)
        if value is not None:
            try:
                options[name] = parse_vector(value).tolist()
            except ValueError as e:
                raise ScenarioError(str(e), field=f"options.{name}") from e
    for name in ("n", "step", "tol", "t_max", "grid", "suite", "mode", "nu"):
        value = getattr(args, name, None)
        if value is not None:
            options[name] = value
    if getattr(args, "extended", False):
        options["extended"] = True
    scenario["options"] = options

    outputs = dict(scenario.get("outputs", {}))
    if args.out is not None:
        outputs["dir"] = args.out
    if args.svg is not None:
        outputs["svg"] = args.svg
    scenario["outputs"] = outputs
    return scenario  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


class RunSession:
    """Results, checks and collected errors of one run."""

    def __init__(self, scenario: ScenarioDict, model: ManifoldModel) -> None:
        self.scenario = scenario
        self.model = model
        self.options: Dict[str, Any] = dict(scenario.get("options", {}))
        self.outputs: Dict[str, Any] = dict(scenario.get("outputs", {}))
        self.seed = int(scenario.get("seed", 0))
        self.results: List[OperationResult] = []
        self.summary: Dict[str, CheckResult] = {}
        self.errors: List[OperationError] = []

    @property
    def out_dir(self) -> Optional[Path]:
        out = self.outputs.get("dir")
        return Path(out) if out else None

    def artifact(self, name: str) -> Optional[Path]:
        return self.out_dir / name if self.out_dir else None

    def call(self, operation: str, fn: Callable[..., Any], *args: Any, **kwargs: Any) -> Any:
        """Run one operation; a GeometryError is recorded once and None returned."""
        try:
            return fn(*args, **kwargs)
        except GeometryError as e:
            logger.error(f"{operation} failed: {e}")
            self.errors.append(
                {"success": False, "error": str(e), "error_code": e.error_code, "operation": operation}
            )
            return None

    def record(self, operation: str, data: Any) -> None:
        self.results.append({"operation": operation, "success": True, "data": to_jsonable(data)})

    def check(self, check_id: str, operation: str, value: Any, tolerance: float, passed: bool) -> None:
        self.summary[check_id] = {
            "operation": operation,
            "tolerance": tolerance,
            "passed": bool(passed),
            "value": to_jsonable(value),
        }
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, f"{check_id}: {'pass' if passed else 'FAIL'} (value={value}, tolerance={tolerance})")

    def x(self) -> np.ndarray:
        if "x" in self.options:
            return _vector(self.options["x"])
        return np.asarray(default_x_points(self.model)[0], dtype=float)

    def vec(self, name: str) -> np.ndarray:
        if name not in self.options:
            raise PreconditionError(f"Missing option {name}")
        return _vector(self.options[name])

    def unit(self, x: np.ndarray, name: str = "v") -> TangentVector:
        v = TangentVector(x, self.vec(name))
        length = norm(self.model, v)
        if length == 0:
            raise PreconditionError(f"options.{name} must be nonzero")
        return v.scaled(1.0 / length)

    def report(self, wall_time: float) -> RunReport:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "scenario": to_jsonable(self.scenario),
            "results": self.results,
            "summary": self.summary,
            "errors": self.errors,
            "failures": sorted(k for k, c in self.summary.items() if not c["passed"]),
            "wall_time": wall_time,
        }


def _unit_directions(model: ManifoldModel, x: np.ndarray, n: int) -> np.ndarray:
    frame = frame_at(model, x)
    angles = angle_grid(n)
    return np.stack([np.cos(angles), np.sin(angles)], axis=1) @ frame[:, :2].T


def _cmd_geodesic(s: RunSession) -> None:
    x = s.x()
    v = TangentVector(x, s.vec("v"))
    t_max = float(s.options.get("t_max", 1.0))
    trace = s.call("integrate_geodesic", integrate_geodesic, s.model, v, t_max, s.options.get("step"))
    if trace is None:
        return
    s.record(
        "integrate_geodesic",
        {
            "initial": v,
            "t_max": t_max,
            "n_samples": len(trace.grid),
            "end_point": trace.points[-1],
            "end_velocity": trace.velocities[-1],
        },
    )
    path = s.artifact("geodesic.csv")
    if path:
        export_trace_csv(trace, path)


def _cmd_focal(s: RunSession) -> None:
    x = s.x()
    e = s.call("focal", s.unit, x)
    if e is None:
        return
    sol = s.call(
        "integrate_fundamental",
        integrate_fundamental,
        s.model,
        e,
        s.options.get("t_max"),
        s.options.get("step"),
    )
    if sol is None:
        return
    report = s.call("focal_time", focal_time, sol)
    if report is not None:
        s.record("focal_time", report)
    s.record("max_symplectic_defect", max_symplectic_defect(sol))
    path = s.artifact("jacobi.csv")
    if path:
        export_solutions_csv(sol, path)


def _cmd_cut(s: RunSession) -> None:
    x = s.x()
    e = s.call("cut", s.unit, x)
    if e is None:
        return
    opts: CutOptions = {}
    if "tol" in s.options:
        opts["tol"] = float(s.options["tol"])
    report = s.call("cut_time", cut_time, s.model, x, e, opts)
    if report is not None:
        s.record("cut_time", report)


def _cmd_domain(s: RunSession) -> None:
    x = s.x()
    sample = s.call("domain_sample", domain_sample, s.model, x, int(s.options.get("n", 360)))
    if sample is None:
        return
    s.record("domain_sample", sample)
    svg = s.outputs.get("svg")
    csv_path = s.artifact("domain.csv")
    if csv_path is None and svg:
        csv_path = Path(svg).with_suffix(".csv")
    if csv_path:
        export_domain_csv(sample, csv_path)
    if svg:
        plot_domain_svg(sample, svg)


def _cmd_mtw_scan(s: RunSession) -> None:
    grid = s.options.get("grid", "coarse")
    report = s.call(
        "mtw_condition_scan",
        mtw_condition_scan,
        s.model,
        grid,
        s.options.get("tol"),
        keep_samples=s.out_dir is not None,
    )
    if report is None:
        return
    path = s.artifact("mtw_scan.csv")
    if path:
        export_scan_csv(report, path)
    report = dict(report)
    report.pop("samples", None)
    s.record("mtw_condition_scan", report)
    if s.options.get("fit"):
        fit = s.call("mtw_kc_fit", mtw_kc_fit, s.model, grid)
        if fit is not None:
            s.record("mtw_kc_fit", fit)


def _cmd_tensor(s: RunSession) -> None:
    x = s.x()
    v, xi, eta = s.vec("v"), s.vec("xi"), s.vec("eta")
    step = s.options.get("step")
    value = s.call("mtw_tensor", mtw_tensor, s.model, x, v, xi, eta, step)
    if value is not None:
        s.record("mtw_tensor", value)
    if s.options.get("extended"):
        ctx = s.call("make_extended_cost_context", make_extended_cost_context, s.model, x, v)
        if ctx is not None:
            ext = s.call("extended_mtw_tensor", extended_mtw_tensor, ctx, xi, eta, step)
            if ext is not None:
                s.record("extended_mtw_tensor", ext)


def _cmd_segment(s: RunSession) -> None:
    x = s.x()
    trace = s.call(
        "segment_trace",
        segment_trace,
        s.model,
        x,
        s.vec("v"),
        s.vec("w"),
        int(s.options.get("n", 64)),
        seed=s.seed,
    )
    if trace is None:
        return
    s.record("segment_trace", trace)
    t = float(s.options.get("t", 0.5))
    hdot = s.call("hdot_check", hdot_check, trace, t)
    if hdot is not None:
        s.record("hdot_check", {"t": t, "formula": hdot[0], "finite_difference": hdot[1]})
    hddot = s.call("hddot_check", hddot_check, trace, t)
    if hddot is not None:
        s.record("hddot_check", {"t": t, "formula": hddot[0], "finite_difference": hddot[1]})
    path = s.artifact("segment.csv")
    if path:
        export_segment_csv(trace, path)


def _cmd_convexity(s: RunSession) -> None:
    x = s.x()
    sample = s.call("domain_sample", domain_sample, s.model, x, int(s.options.get("n", 360)))
    if sample is None:
        return
    report = s.call(
        "semiconvexity_test",
        semiconvexity_test,
        sample,
        s.options.get("mode", "radial"),
        s.options.get("nu"),
        int(s.options.get("stride", 1)),
    )
    if report is not None:
        s.record("semiconvexity_test", report)


# ---------------------------------------------------------------------------
# Verification suites
# ---------------------------------------------------------------------------


def _expected_cut(model: ManifoldModel, e: np.ndarray) -> Optional[float]:
    """Closed-form cut time along a unit direction (frame coordinates), when known."""
    kind = model.declaration.get("type")
    params = model.declaration.get("params", {})
    if kind == "sphere":
        return math.pi * float(params["radius"])
    if kind == "flat_torus":
        return 0.5 * float(params["period"]) / float(np.max(np.abs(e)))
    return None


def _verify_metric(s: RunSession, sizes: Dict[str, Any]) -> None:
    rng = np.random.default_rng(s.seed)
    lower = np.asarray(s.model.chart.lower, dtype=float)
    upper = np.asarray(s.model.chart.upper, dtype=float)
    pad = 0.1 * (upper - lower)
    points = rng.uniform(lower + pad, upper - pad, size=(4 * sizes["directions"], s.model.dim))
    stats = check_metric(s.model, points)
    s.check(
        "metric_positive",
        "check_metric",
        stats,
        METRIC_SYMMETRY_TOL,
        stats["symmetry_defect"] <= METRIC_SYMMETRY_TOL and stats["min_eigenvalue"] > 0,
    )


def _verify_focal_cut(s: RunSession, x: np.ndarray, sizes: Dict[str, Any]) -> None:
    dirs = _unit_directions(s.model, x, sizes["directions"])
    frame = frame_at(s.model, x)
    to_frame = frame.T @ s.model.metric_eval(x)

    analytic_focal = s.model.analytic_focal
    if analytic_focal is not None:
        reports = s.call(
            "focal_times_batch",
            focal_times_batch,
            s.model,
            np.repeat(x[None], len(dirs), axis=0),
            dirs,
        )
        if reports is not None:
            worst = 0.0
            for e, rep in zip(dirs, reports):
                expected = analytic_focal(x, e)
                if math.isinf(expected) and math.isinf(rep.t_f):
                    continue
                worst = max(worst, abs(rep.t_f - expected))
            s.check("focal_ground_truth", "focal_times_batch", worst, FOCAL_CUT_TOL, worst <= FOCAL_CUT_TOL)

    if _expected_cut(s.model, to_frame @ dirs[0]) is None:
        return
    worst = 0.0
    for e in dirs:
        rep = s.call("cut_time", cut_time, s.model, x, TangentVector(x, e))
        if rep is None:
            worst = math.inf
            continue
        expected = _expected_cut(s.model, to_frame @ e)
        worst = max(worst, abs(rep.t_cut - float(expected)))
    s.check("cut_ground_truth", "cut_time", worst, FOCAL_CUT_TOL, worst <= FOCAL_CUT_TOL)


def _verify_jacobi(s: RunSession, x: np.ndarray, sizes: Dict[str, Any]) -> None:
    dirs = _unit_directions(s.model, x, sizes["directions"])
    bases = np.repeat(x[None], len(dirs), axis=0)
    sols = s.call(
        "fundamental_batch", fundamental_batch, s.model, bases, dirs, default_horizon(s.model, 1.0)
    )
    if sols is not None:
        worst = max(max_symplectic_defect(sol) for sol in sols)
        s.check("symplectic_invariance", "max_symplectic_defect", worst, SYMPLECTIC_TOL, worst <= SYMPLECTIC_TOL)

    rng = np.random.default_rng(s.seed + 1)
    n = sizes["jacobi_samples"]
    angles = rng.uniform(0.0, 2.0 * math.pi, size=n)
    speeds = rng.uniform(0.5, 1.0, size=n)
    frame = frame_at(s.model, x)
    vels = speeds[:, None] * (np.stack([np.cos(angles), np.sin(angles)], axis=1) @ frame[:, :2].T)
    sols = s.call("fundamental_batch", fundamental_batch, s.model, np.repeat(x[None], n, axis=0), vels, 1.0)
    if sols is None:
        return
    worst = 0.0
    for sol in sols:
        h = rng.standard_normal(s.model.dim)
        residual = s.call(
            "verify_jacobi_vs_exp",
            verify_jacobi_vs_exp,
            s.model,
            sol,
            h / np.linalg.norm(h),
            float(rng.uniform(0.2, 1.0)),
        )
        worst = max(worst, math.inf if residual is None else residual)
    s.check("jacobi_exp_consistency", "verify_jacobi_vs_exp", worst, JACOBI_EXP_TOL, worst <= JACOBI_EXP_TOL)


def _verify_mtw(s: RunSession, x: np.ndarray, sizes: Dict[str, Any]) -> Optional[bool]:
    """Loeper identity and the MTW scan; returns the scan verdict."""
    loeper = s.call("loeper_check", loeper_check, s.model, x, n_pairs=sizes["loeper_pairs"], tolerance=LOEPER_TOL)
    if loeper is not None:
        s.check("loeper_identity", "loeper_check", loeper["max_defect"], LOEPER_TOL, loeper["passed"])

    scan = s.call("mtw_condition_scan", mtw_condition_scan, s.model, sizes["grid"])
    if scan is None:
        return None
    s.record("mtw_condition_scan", scan)

    kind = s.model.declaration.get("type")
    k_min = min(gaussian_curvature(s.model, p) for p in default_x_points(s.model))
    if k_min < -scan["tolerance"]:
        expected: Optional[bool] = False
    elif kind in ("sphere", "flat_torus"):
        expected = True
    else:
        expected = None
    if expected is not None:
        s.check(
            "mtw_curvature_sign",
            "mtw_condition_scan",
            {"min_value": scan["min_value"], "min_curvature": k_min, "expected_pass": expected},
            scan["tolerance"],
            scan["passed"] == expected,
        )
    return bool(scan["passed"])


def _verify_domain(s: RunSession, x: np.ndarray, sizes: Dict[str, Any], mtw_passed: Optional[bool]) -> None:
    sample = s.call("domain_sample", domain_sample, s.model, x, sizes["domain_n"])
    if sample is None:
        return

    kind = s.model.declaration.get("type")
    nonfocal = s.call("nonfocality_report", nonfocality_report, s.model, [x], sizes["domain_n"])
    if nonfocal is not None:
        s.record("nonfocality_report", {k: v for k, v in nonfocal.items() if k != "margins"})
        if kind in NONFOCAL_EXPECTED:
            s.check(
                "nonfocality",
                "nonfocality_report",
                nonfocal["nonfocal"],
                nonfocal["tolerance"],
                nonfocal["nonfocal"] == NONFOCAL_EXPECTED[kind],
            )

    for check_id, fn in (("lem1_lipschitz", verify_lem1), ("lem2_lipschitz", verify_lem2)):
        fit = s.call(fn.__name__, fn, s.model, sample)
        if fit is not None:
            fit = dict(fit)
            ok = bool(fit["passed"]) and math.isfinite(fit["K"])
            s.check(check_id, fn.__name__, {"K": fit["K"], "n_samples": fit["n_samples"]}, 0.0, ok)

    report = s.call("semiconvexity_test", semiconvexity_test, sample, "radial", tol=CONVEXITY_TOL)
    if report is None:
        return
    s.record("semiconvexity_test", report)
    # A failed MTW scan makes a nonconvex I(x) a finding, not a failure
    passed = report.convex or mtw_passed is False
    value: Dict[str, Any] = {"delta_radial": report.delta_radial, "convex": report.convex, "mtw_passed": mtw_passed}
    if not report.convex and mtw_passed is False:
        value["finding"] = "nonconvex_injectivity_domain"
        logger.warning(
            f"Nonconvex I(x) at {x.tolist()} on {s.model.name} (delta_radial={report.delta_radial:.6g}), "
            f"consistent with the failed MTW scan"
        )
    s.check("convexity_coherence", "semiconvexity_test", value, CONVEXITY_TOL, passed)


def _verify_profiles(s: RunSession, sizes: Dict[str, Any]) -> None:
    n = sizes["profiles"]
    cases: List[Tuple[str, str, float, float, Callable[..., Any]]] = [
        ("lemineq_profiles", "lemineq", 1.0, 1.0, lambda th, c, C: check_lemineq(th, c)),
        ("lemineqbis_profiles", "lemineqbis", 1.0, 2.0, check_lemineqbis),
        # literal-reading failures are counted, not gated
        ("lemineqbism_profiles", "lemineqbism", 1.0, 1.0, partial(check_lemineqbism, reading="corrected")),
    ]
    for offset, (check_id, kind, c, C, checker) in enumerate(cases):
        profiles = s.call(
            "generate_admissible_profiles", generate_admissible_profiles, kind, c, C, n, s.seed + offset
        )
        if profiles is None:
            continue
        t, H = profiles
        falsified = 0
        admitted = 0
        inconclusive = 0
        literal_failures = 0
        for h in H:
            result = s.call(f"check_{kind}", checker, (t, h), c, C)
            if result is None:
                continue
            admitted += int(result.hypothesis_ok)
            falsified += int(result.falsified)
            inconclusive += int(result.inconclusive)
            if result.hypothesis_ok and result.readings.get("literal") is False:
                literal_failures += 1
        value: Dict[str, Any] = {"falsified": falsified, "admitted": admitted, "inconclusive": inconclusive, "n": n}
        if kind == "lemineqbism":
            value["literal_failures"] = literal_failures
        s.check(check_id, f"check_{kind}", value, 0.0, falsified == 0)


def _cmd_verify(s: RunSession) -> None:
    suite = s.options.get("suite", "core")
    sizes = SUITE_SIZES[suite]
    x = s.x()
    logger.info(f"Running the {suite} suite on {s.model.name} at x={x.tolist()}")
    _verify_metric(s, sizes)
    _verify_focal_cut(s, x, sizes)
    _verify_jacobi(s, x, sizes)
    mtw_passed = _verify_mtw(s, x, sizes)
    _verify_domain(s, x, sizes, mtw_passed)
    _verify_profiles(s, sizes)


COMMAND_HANDLERS: Dict[str, Callable[[RunSession], None]] = {
    "geodesic": _cmd_geodesic,
    "focal": _cmd_focal,
    "cut": _cmd_cut,
    "domain": _cmd_domain,
    "mtw-scan": _cmd_mtw_scan,
    "tensor": _cmd_tensor,
    "segment": _cmd_segment,
    "convexity": _cmd_convexity,
    "verify": _cmd_verify,
}


def run(scenario: ScenarioDict) -> RunReport:
    """
    Execute a validated scenario.

    Writes report.json (sorted keys) and the requested CSV/SVG artifacts when
    an output directory is given.

    Returns:
        RunReport
    """
    start = time.perf_counter()
    try:
        model = load_manifold(scenario["manifold"])  # type: ignore[arg-type]
    except GeometryError as e:
        logger.error(f"Could not load manifold: {e}")
        report: RunReport = {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "scenario": to_jsonable(scenario),
            "results": [],
            "summary": {},
            "errors": [{"success": False, "error": str(e), "error_code": e.error_code, "operation": "load_manifold"}],
            "failures": [],
            "wall_time": time.perf_counter() - start,
        }
        return report

    session = RunSession(scenario, model)
    COMMAND_HANDLERS[scenario["command"]](session)
    report = session.report(time.perf_counter() - start)
    if session.out_dir is not None:
        write_json(session.out_dir / "report.json", report)
    logger.info(
        f"{scenario['command']} on {model.name}: {len(report['failures'])} failures, "
        f"{len(report['errors'])} errors in {report['wall_time']:.2f}s"
    )
    return report


def exit_status(report: RunReport) -> int:
    return 0 if not report["failures"] and not report["errors"] else 1


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    verbosity = argparse.ArgumentParser(add_help=False)
    verbosity.add_argument("--verbose", action="store_true", help="Log at DEBUG level")

    common = argparse.ArgumentParser(add_help=False, parents=[verbosity])
    common.add_argument("--manifold", help="Built-in name or path to a JSON declaration")
    common.add_argument("--x", help="Base point, e.g. 0,0 (default: chart midpoint)")
    common.add_argument("--v", help="Tangent vector at x")
    common.add_argument("--w", help="Second tangent vector (segment end)")
    common.add_argument("--xi", help="First MTW direction")
    common.add_argument("--eta", help="Second MTW direction")
    common.add_argument("--n", type=int, help="Number of directions or samples")
    common.add_argument("--step", type=float, help="Integration or stencil step")
    common.add_argument("--t-max", dest="t_max", type=float, help="Geodesic horizon")
    common.add_argument("--tol", type=float, help="Tolerance")
    common.add_argument("--seed", type=int, help="Seed for randomized suites")
    common.add_argument("--grid", help=f"MTW grid preset ({', '.join(GRID_PRESETS)})")
    common.add_argument("--suite", choices=SUITES, help="Verification suite")
    common.add_argument("--mode", choices=("radial", "distance"), help="Semiconvexity mode")
    common.add_argument("--nu", type=float, help="Locality radius of the semiconvexity test")
    common.add_argument("--extended", action="store_true", help="Also evaluate the extended tensor")
    common.add_argument("--out", help="Output directory for report.json and CSV files")
    common.add_argument("--svg", help="SVG plot of the injectivity domain")

    parser = argparse.ArgumentParser(
        prog="mtwgeo",
        description="Cut loci, focal times and MTW tensors on Riemannian surfaces",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"Run the {name} command")
    validate_parser = sub.add_parser("validate", parents=[verbosity], help="Check a scenario file")
    validate_parser.add_argument("scenario", help="Scenario JSON file")
    run_parser = sub.add_parser("run", parents=[common], help="Run a scenario file")
    run_parser.add_argument("--scenario", required=True, help="Scenario JSON file")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == "validate":
        try:
            diags = validate(args.scenario)
        except OSError as e:
            logger.error(f"Cannot read scenario: {e}")
            return 2
        print(json.dumps(diags, indent=2, sort_keys=True))
        return 0 if not diags else 1

    try:
        base = load_scenario(args.scenario) if args.command == "run" else None
        scenario = scenario_from_args(args, base)
    except OSError as e:
        logger.error(f"Cannot read scenario: {e}")
        return 2
    except ScenarioError as e:
        where = f" (line {e.line})" if e.line else ""
        logger.error(f"Invalid scenario field {e.field}{where}: {e}")
        return 2

    diags = validate_scenario(scenario)
    if diags:
        for d in diags:
            logger.error(f"{d['field']}: {d['message']}")
        return 2

    report = run(scenario)
    if not scenario.get("outputs", {}).get("dir"):
        print(json.dumps(to_jsonable(report), indent=2, sort_keys=True))
    return exit_status(report)


if __name__ == "__main__":
    sys.exit(main())
