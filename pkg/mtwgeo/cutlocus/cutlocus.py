"""
Cut times, injectivity domains and their radial geometry.

The cut time along a unit direction is found by bisecting the predicate
d(x, exp_x(t e)) >= t - slack below min(t_f, diameter_bound). Sampling cut and
focal times over a direction grid gives star-shaped boundary graphs of the
injectivity domain I(x) and the nonfocal domain NF(x), which the radial
distance, the sampled distance/radial inequalities and the Lipschitz probes
are evaluated on.
"""

import logging
import math
import threading
import weakref
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, TypedDict, Union

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from ..config import get_setting
from ..errors import (
    GeometryError,
    InconsistentInputError,
    PreconditionError,
    UnresolvedCutError,
    UnresolvedSectorError,
)
from ..geodesic import DistanceOptions, distance, exp_batch, exp_map, integrate_geodesic
from ..jacobi import (
    focal_times_batch,
    fundamental_batch,
    quotients_stable,
)
from ..manifold import (
    ManifoldModel,
    TangentVector,
    frame_at,
    in_domain,
    metric_at,
    reduce_point,
)
from ..types import (
    CutReportDict,
    LemmaFit,
    LipschitzProbeReport,
    NonfocalityReport,
    OperationError,
)
from ..utils import angle_grid, parallel_map, write_csv

logger = logging.getLogger(__name__)

# Constants
UNIT_TOL = 1e-10
COLINEAR_TOL = 1e-9
FOCAL_CUT_TOL = 1e-6
SAMPLE_TOL = 1e-7
INJECTIVITY_DIRECTIONS = 16
INJECTIVITY_FRACTIONS = (0.125, 0.25, 0.5, 1.0)
MAX_HALVINGS = 40
MIN_DIRECTIONS = 8
PLOT_SIZE_INCHES = 8.0
PLOT_DPI = 100
PROBE_MODES = ("velocity", "geodesic-direction", "focal-kernel")


class CutOptions(TypedDict, total=False):
    """Options of cut_time."""

    tol: float
    slack: float
    t_f: float
    distance: DistanceOptions


@dataclass(frozen=True, eq=False)
class CutReport:
    """Cut time along a unit direction with the minimizers reaching the cut point."""

    direction: TangentVector
    t_cut: float
    t_f: float
    competing_velocities: Tuple[TangentVector, ...]
    delta_v: float
    purely_focal: bool
    focal_cut: bool
    multiplicity: int
    cap_reached: bool
    bracket: Tuple[float, float] = (0.0, 0.0)

    def to_dict(self) -> CutReportDict:
        return {
            "direction": self.direction.components.tolist(),
            "t_cut": self.t_cut,
            "t_f": self.t_f,
            "delta_v": self.delta_v,
            "multiplicity": self.multiplicity,
            "purely_focal": self.purely_focal,
            "focal_cut": self.focal_cut,
            "cap_reached": self.cap_reached,
            "competing_velocities": [w.components.tolist() for w in self.competing_velocities],
        }


@dataclass(frozen=True, eq=False)
class DomainSample:
    """Per-direction cut and focal times at x over a uniform angular grid."""

    model: ManifoldModel
    x: np.ndarray
    angles: np.ndarray
    directions: np.ndarray
    t_cut_values: np.ndarray
    t_f_values: np.ndarray
    delta_values: np.ndarray
    multiplicities: np.ndarray
    metric: np.ndarray
    frame: np.ndarray
    unresolved: Tuple[int, ...] = ()
    errors: Tuple[OperationError, ...] = ()
    tolerance: float = SAMPLE_TOL
    reports: Tuple[Optional[CutReport], ...] = field(default=(), repr=False)

    @property
    def resolved(self) -> np.ndarray:
        return np.isfinite(self.t_cut_values)

    @property
    def complete(self) -> bool:
        return not self.unresolved

    def boundary_points(self) -> np.ndarray:
        """TCL points in orthonormal frame coordinates, one per direction (nan if unresolved)."""
        return self.t_cut_values[:, None] * np.stack([np.cos(self.angles), np.sin(self.angles)], axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x": self.x.tolist(),
            "n_directions": len(self.angles),
            "angles": self.angles.tolist(),
            "t_cut": self.t_cut_values.tolist(),
            "t_f": self.t_f_values.tolist(),
            "delta": self.delta_values.tolist(),
            "unresolved": list(self.unresolved),
            "errors": list(self.errors),
            "tolerance": self.tolerance,
        }


# ---------------------------------------------------------------------------
# Cut time
# ---------------------------------------------------------------------------

_injectivity_cache: "weakref.WeakKeyDictionary[ManifoldModel, Dict[bytes, float]]" = weakref.WeakKeyDictionary()
_cache_lock = threading.Lock()


def clear_cut_cache() -> None:
    """Drop cached injectivity-radius estimates."""
    with _cache_lock:
        _injectivity_cache.clear()


def _unit_check(model: ManifoldModel, e_v: TangentVector) -> Tuple[np.ndarray, np.ndarray]:
    x = reduce_point(model, e_v.base)
    if not in_domain(model, x):
        raise PreconditionError(f"Base point {e_v.base.tolist()} is outside the chart")
    g = metric_at(model, x)
    length = math.sqrt(float(e_v.components @ g @ e_v.components))
    if abs(length - 1.0) > UNIT_TOL:
        raise PreconditionError(f"cut_time needs a unit direction, |e_v| = {length:.12g}")
    return x, e_v.components


def _distance_options(opts: CutOptions) -> DistanceOptions:
    return dict(opts.get("distance", {}))  # type: ignore[return-value]


def _endpoint(model: ManifoldModel, x: np.ndarray, w: np.ndarray, dopts: DistanceOptions) -> np.ndarray:
    """exp_x(w) with the same discretization the distance oracle refines with."""
    step = dopts.get("refine_step", dopts.get("step", get_setting("shooting_step")))
    points, _, ok = exp_batch(model, x[None], w[None], 1.0, step)
    if not ok[0]:
        raise UnresolvedCutError("Geodesic left the chart before the cut point", (0.0, float(np.linalg.norm(w))))
    return points[0]


def _predicate(
    model: ManifoldModel,
    x: np.ndarray,
    e: np.ndarray,
    t: float,
    slack: float,
    dopts: DistanceOptions,
    bracket: Tuple[float, float],
) -> bool:
    y = _endpoint(model, x, t * e, dopts)
    hinted: DistanceOptions = dict(dopts)  # type: ignore[assignment]
    hinted["hints"] = [t * e] + list(dopts.get("hints", []))
    result = distance(model, x, y, hinted)
    if not result.converged:
        raise UnresolvedCutError(
            f"Distance oracle did not converge at t={t:.6g} inside [{bracket[0]:.6g}, {bracket[1]:.6g}]",
            bracket,
        )
    return result.value >= t - slack


def injectivity_lower_bound(model: ManifoldModel, x: Any, opts: Optional[CutOptions] = None) -> float:
    """
    Lower estimate of the injectivity radius at x.

    Uses the model's known radius when it has one; otherwise half the first
    distance shortcut found over a coarse scan of directions and times.
    """
    xp = reduce_point(model, np.asarray(x, dtype=float))
    if model.injectivity_radius is not None:
        return float(model.injectivity_radius)

    key = xp.tobytes()
    with _cache_lock:
        cached = _injectivity_cache.get(model, {}).get(key)
    if cached is not None:
        return cached

    opts = opts or {}
    slack = float(opts.get("slack", get_setting("predicate_slack")))
    dopts = _distance_options(opts)
    frame = frame_at(model, xp)
    first_shortcut = model.diameter_bound
    for ang in angle_grid(INJECTIVITY_DIRECTIONS):
        e = frame @ np.array([math.cos(ang), math.sin(ang)] + [0.0] * (model.dim - 2))
        for frac in INJECTIVITY_FRACTIONS:
            t = frac * model.diameter_bound
            try:
                ok = _predicate(model, xp, e, t, slack, dopts, (0.0, t))
            except UnresolvedCutError:
                ok = False
            if not ok:
                first_shortcut = min(first_shortcut, t)
                break
    bound = 0.5 * first_shortcut
    with _cache_lock:
        _injectivity_cache.setdefault(model, {})[key] = bound
    logger.info(f"Injectivity lower bound for {model.name} at {xp.tolist()}: {bound:.6g}")
    return bound


def _focal_time_of(model: ManifoldModel, x: np.ndarray, e: np.ndarray) -> float:
    if model.analytic_focal is not None:
        return float(model.analytic_focal(x, e))
    return focal_times_batch(model, x[None], e[None])[0].t_f


def _pairwise_spread(g: np.ndarray, vels: Sequence[np.ndarray]) -> float:
    spread = 0.0
    for i in range(len(vels)):
        for j in range(i + 1, len(vels)):
            d = vels[i] - vels[j]
            spread = max(spread, math.sqrt(max(float(d @ g @ d), 0.0)))
    return spread


def cut_time(model: ManifoldModel, x: Any, e_v: TangentVector, opts: Optional[CutOptions] = None) -> CutReport:
    """
    Cut time t_cut(x, e_v) and the minimizers reaching the cut point.

    Bisects P(t): d(x, exp_x(t e_v)) >= t - slack between an injectivity
    lower bound (halved until P holds) and min(t_f, diameter_bound).

    Args:
        model: Manifold model
        x: Base point (must match e_v.base)
        e_v: Unit direction at x
        opts: CutOptions (tol, slack, precomputed t_f, distance options)

    Returns:
        CutReport with the competing minimizers at exp_x(t_cut e_v) and delta(v),
        the largest pairwise distance between them

    Raises:
        PreconditionError: If e_v is not unit length
        UnresolvedCutError: If the distance oracle fails inside the bracket

    Example:
        >>> torus = load_manifold("torus_2pi")
        >>> cut_time(torus, [0, 0], TangentVector([0, 0], [1, 0])).t_cut  # doctest: +ELLIPSIS
        3.14159...
    """
    opts = opts or {}
    xb, e = _unit_check(model, e_v)
    xp = reduce_point(model, np.asarray(x, dtype=float))
    if np.any(np.abs(xp - xb) > 1e-12):
        raise PreconditionError("Direction is not based at x")

    tol = float(opts.get("tol", get_setting("bisection_tol")))
    slack = float(opts.get("slack", get_setting("predicate_slack")))
    cap = int(get_setting("multiplicity_cap"))
    dopts = _distance_options(opts)

    t_f = float(opts["t_f"]) if "t_f" in opts else _focal_time_of(model, xp, e)
    hi = min(t_f, model.diameter_bound)
    lo = min(injectivity_lower_bound(model, xp, opts), hi)

    halvings = 0
    while not _predicate(model, xp, e, lo, slack, dopts, (0.0, hi)):
        lo *= 0.5
        halvings += 1
        if halvings > MAX_HALVINGS:
            raise UnresolvedCutError("No admissible lower bracket found", (0.0, hi))

    if _predicate(model, xp, e, hi, slack, dopts, (lo, hi)):
        t_cut = hi
    else:
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _predicate(model, xp, e, mid, slack, dopts, (lo, hi)):
                lo = mid
            else:
                hi = mid
        t_cut = lo
    bracket = (lo, hi)

    own = t_cut * e
    y = _endpoint(model, xp, own, dopts)
    hinted: DistanceOptions = dict(dopts)  # type: ignore[assignment]
    hinted["hints"] = [own]
    result = distance(model, xp, y, hinted)
    vels = [w.components for w in result.minimizers]
    length_gap = float(dopts.get("length_gap", 1e-5))
    own_is_new = all(np.linalg.norm(w - own) > 1e-6 for w in vels)
    if len(vels) < cap and own_is_new and abs(t_cut - result.value) <= length_gap:
        vels.append(own)
    cap_reached = len(vels) >= cap
    if cap_reached:
        logger.debug(f"Multiplicity cap reached at t_cut={t_cut:.6g} on {model.name}")

    g = metric_at(model, xp)
    delta = _pairwise_spread(g, vels)
    focal_cut = math.isfinite(t_f) and abs(t_cut - t_f) <= FOCAL_CUT_TOL
    return CutReport(
        direction=TangentVector(xp, e),
        t_cut=float(t_cut),
        t_f=t_f,
        competing_velocities=tuple(TangentVector(xp, w) for w in vels),
        delta_v=delta,
        purely_focal=focal_cut and len(vels) == 1,
        focal_cut=focal_cut,
        multiplicity=len(vels),
        cap_reached=cap_reached,
        bracket=bracket,
    )


# ---------------------------------------------------------------------------
# Domain samples
# ---------------------------------------------------------------------------


def _error_entry(e: GeometryError, index: int, operation: str) -> OperationError:
    return {
        "success": False,
        "error": str(e),
        "error_code": e.error_code,
        "operation": operation,
        "index": index,
    }


def domain_sample(
    model: ManifoldModel, x: Any, N: int, opts: Optional[CutOptions] = None
) -> DomainSample:
    """
    Cut and focal times over N uniformly spaced unit directions at x.

    Directions are cos(a) f1 + sin(a) f2 for an orthonormal frame (f1, f2) at x.
    Directions whose cut time cannot be resolved are recorded with nan and a
    structured error instead of aborting the sample.

    Raises:
        PreconditionError: If N < 8 or the model is not a surface
    """
    if N < MIN_DIRECTIONS:
        raise PreconditionError(f"domain_sample needs N >= {MIN_DIRECTIONS}, got {N}")
    if model.dim != 2:
        raise PreconditionError("domain_sample is implemented for surfaces only")
    opts = dict(opts or {})
    xp = reduce_point(model, np.asarray(x, dtype=float))
    if not in_domain(model, xp):
        raise PreconditionError(f"Point {xp.tolist()} is outside the chart")

    g = metric_at(model, xp)
    frame = frame_at(model, xp)
    angles = angle_grid(N)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1) @ frame.T

    if model.analytic_focal is not None:
        t_f = np.array([model.analytic_focal(xp, d) for d in dirs], dtype=float)
    else:
        t_f = np.array([r.t_f for r in focal_times_batch(model, np.repeat(xp[None], N, axis=0), dirs)])

    def one(i: int) -> Dict[str, Any]:
        item_opts: CutOptions = dict(opts)  # type: ignore[assignment]
        item_opts["t_f"] = float(t_f[i])
        try:
            return {"success": True, "data": cut_time(model, xp, TangentVector(xp, dirs[i]), item_opts)}
        except GeometryError as e:
            return {"success": False, "error": e}

    results = parallel_map(one, list(range(N)))

    t_cut = np.full(N, np.nan)
    delta = np.full(N, np.nan)
    mult = np.zeros(N, dtype=int)
    reports: List[Optional[CutReport]] = []
    unresolved: List[int] = []
    errors: List[OperationError] = []
    for i, res in enumerate(results):
        if res["success"]:
            rep: CutReport = res["data"]
            t_cut[i] = rep.t_cut
            delta[i] = rep.delta_v
            mult[i] = rep.multiplicity
            reports.append(rep)
        else:
            unresolved.append(i)
            errors.append(_error_entry(res["error"], i, "cut_time"))
            reports.append(None)
            logger.error(f"cut_time failed in direction {i} at {xp.tolist()}: {res['error']}")

    if unresolved:
        logger.warning(f"Domain sample at {xp.tolist()}: {len(unresolved)} of {N} directions unresolved")
    logger.info(f"Sampled I(x) for {model.name} at {xp.tolist()} with {N} directions")
    return DomainSample(
        model=model,
        x=xp,
        angles=angles,
        directions=dirs,
        t_cut_values=t_cut,
        t_f_values=t_f,
        delta_values=delta,
        multiplicities=mult,
        metric=g,
        frame=frame,
        unresolved=tuple(unresolved),
        errors=tuple(errors),
        reports=tuple(reports),
    )


# ---------------------------------------------------------------------------
# Radial distance
# ---------------------------------------------------------------------------


def radial_distance(v: TangentVector, w: TangentVector, model: Optional[ManifoldModel] = None) -> float:
    """
    Radial distance on T_xM: |v - w| on a common ray, |v| + |w| otherwise.

    Uses the Euclidean chart metric when no model is given.

    Raises:
        PreconditionError: If v and w have different base points
    """
    if v.base.shape != w.base.shape or np.any(np.abs(v.base - w.base) > 1e-12):
        raise PreconditionError("radial_distance needs vectors at the same base point")
    g = metric_at(model, v.base) if model is not None else np.eye(len(v.base))
    a, b = v.components, w.components
    na = math.sqrt(max(float(a @ g @ a), 0.0))
    nb = math.sqrt(max(float(b @ g @ b), 0.0))
    if float(a @ g @ b) >= na * nb * (1.0 - COLINEAR_TOL):
        d = a - b
        return math.sqrt(max(float(d @ g @ d), 0.0))
    return na + nb


def _frame_angle(sample: DomainSample, comps: np.ndarray) -> Tuple[float, float]:
    coords = sample.frame.T @ sample.metric @ comps
    return float(np.linalg.norm(coords)), float(np.mod(math.atan2(coords[1], coords[0]), 2 * math.pi))


def interpolated_cut(sample: DomainSample, angle: float) -> float:
    """t_cut at an arbitrary angle by linear interpolation between grid directions."""
    N = len(sample.angles)
    step = 2 * math.pi / N
    pos = angle / step
    i = int(math.floor(pos)) % N
    j = (i + 1) % N
    a, b = sample.t_cut_values[i], sample.t_cut_values[j]
    if not (math.isfinite(a) and math.isfinite(b)):
        raise UnresolvedSectorError(f"Direction at angle {angle:.6g} falls in an unresolved sector")
    frac = pos - math.floor(pos)
    return float((1 - frac) * a + frac * b)


def radial_distance_to_domain(sample: DomainSample, v: Union[TangentVector, Sequence[float]]) -> float:
    """
    rho_x(v, I(x)) = max(0, |v| - t_cut(v/|v|)) with t_cut interpolated in angle.

    Raises:
        PreconditionError: If v is not based at the sample point
        UnresolvedSectorError: If a neighbouring direction is unresolved
    """
    if isinstance(v, TangentVector):
        if np.any(np.abs(reduce_point(sample.model, v.base) - sample.x) > 1e-12):
            raise PreconditionError("Vector is not based at the sample point")
        comps = v.components
    else:
        comps = np.asarray(v, dtype=float)
    length, angle = _frame_angle(sample, comps)
    if length == 0:
        return 0.0
    return max(0.0, length - interpolated_cut(sample, angle))


def cut_margin(sample: DomainSample, v: Union[TangentVector, Sequence[float]]) -> float:
    """
    Signed room t_cut(v/|v|) - |v| left before the sampled cut locus.

    Negative past the cut locus, where its magnitude is the radial distance.

    Raises:
        PreconditionError: If v is not based at the sample point
        UnresolvedSectorError: If a neighbouring direction is unresolved
    """
    if isinstance(v, TangentVector):
        if np.any(np.abs(reduce_point(sample.model, v.base) - sample.x) > 1e-12):
            raise PreconditionError("Vector is not based at the sample point")
        comps = v.components
    else:
        comps = np.asarray(v, dtype=float)
    length, angle = _frame_angle(sample, comps)
    if length == 0:
        return float(np.nanmin(sample.t_cut_values))
    return interpolated_cut(sample, angle) - length


def delta_of_set(
    reports: Sequence[Optional[CutReport]], gate: float = FOCAL_CUT_TOL
) -> Dict[str, Any]:
    """
    delta(V) as the minimum delta(v) over the sampled TCL points of V.

    Returns:
        Dict with the value (+inf for an empty set), the count, and the
        indices whose delta(v) is positive but below the gate
    """
    values = [(i, r.delta_v) for i, r in enumerate(reports) if r is not None]
    if not values:
        return {"delta": math.inf, "count": 0, "marginal": []}
    marginal = [i for i, d in values if 0 < d < gate]
    if marginal:
        logger.warning(f"{len(marginal)} sampled delta(v) values are below the gate {gate:g}")
    return {"delta": min(d for _, d in values), "count": len(values), "marginal": marginal}


# ---------------------------------------------------------------------------
# Sampled inequalities
# ---------------------------------------------------------------------------


def _band_velocities(sample: DomainSample, band: float, n_scales: int) -> Tuple[np.ndarray, np.ndarray]:
    """Velocities s t_cut(e) e for s in [1 - band, 1 + band], with their direction indices."""
    scales = np.linspace(1.0 - band, 1.0 + band, n_scales)
    idx = np.flatnonzero(sample.resolved)
    vels = (scales[None, :, None] * sample.t_cut_values[idx, None, None] * sample.directions[idx, None, :])
    owners = np.repeat(idx, n_scales)
    return vels.reshape(-1, sample.x.size), owners


def verify_lem1(
    model: ManifoldModel,
    sample: DomainSample,
    band: float = 0.2,
    n_scales: int = 5,
    assume_nonfocal: bool = False,
    delta_threshold: float = 1e-3,
) -> LemmaFit:
    """
    Fit K in rho_x(v, I(x)) <= K (|v|^2 - d(x, exp_x v)^2) over a scaling band of TCL(x).

    A sample with rho > 0 and a vanishing right-hand side is a violation.

    Raises:
        InconsistentInputError: If nonfocality is asserted but some sampled
            delta(v) is below delta_threshold
    """
    if assume_nonfocal:
        low = [i for i in np.flatnonzero(sample.resolved) if sample.delta_values[i] < delta_threshold]
        if low:
            raise InconsistentInputError(
                f"delta(v) below {delta_threshold:g} in {len(low)} directions although nonfocality was asserted"
            )

    vels, owners = _band_velocities(sample, band, n_scales)
    points, _, ok = exp_batch(model, np.repeat(sample.x[None], len(vels), axis=0), vels)
    g = sample.metric
    K = 0.0
    violations: List[Dict[str, Any]] = []
    skipped = 0
    for k, w in enumerate(vels):
        rho = radial_distance_to_domain(sample, w)
        if rho <= SAMPLE_TOL:
            continue
        if not ok[k]:
            skipped += 1
            continue
        d = distance(model, sample.x, points[k]).value
        rhs = float(w @ g @ w) - d * d
        if rhs <= 1e-12:
            violations.append({"direction": int(owners[k]), "v": w.tolist(), "rho": rho, "rhs": rhs})
            continue
        K = max(K, rho / rhs)

    return {
        "K": K,
        "n_samples": len(vels),
        "n_skipped": skipped,
        "violations": violations,
        "passed": not violations,
    }


def verify_lem2(
    model: ManifoldModel,
    sample: DomainSample,
    band: float = 0.2,
    n_scales: int = 5,
    opts: Optional[CutOptions] = None,
) -> LemmaFit:
    """
    Two-sided comparability of rho_x(v, I(x)) and rho_y(w, I(y)), y = exp_x v,
    w = -(final velocity), plus the same ratio for the distance to the focal
    locus when v is inside I(x).

    rho_y is evaluated from the cut time at y in the direction of w. Samples
    whose cut time at y cannot be resolved are skipped and flagged.
    """
    vels, _ = _band_velocities(sample, band, n_scales)
    points, finals, ok = exp_batch(model, np.repeat(sample.x[None], len(vels), axis=0), vels)
    K = 1.0
    K_tfl = 1.0
    tfl_count = 0
    violations: List[Dict[str, Any]] = []
    flagged: List[int] = []
    n_used = 0

    for k, v in enumerate(vels):
        if not ok[k]:
            flagged.append(k)
            continue
        y = points[k]
        w = -finals[k]
        gy = metric_at(model, y)
        w_len = math.sqrt(float(w @ gy @ w))
        try:
            rep = cut_time(model, y, TangentVector(y, w / w_len), opts)
        except GeometryError as e:
            logger.warning(f"verify_lem2: cut time at y unresolved for sample {k}: {e}")
            flagged.append(k)
            continue
        n_used += 1
        rho_x = radial_distance_to_domain(sample, v)
        rho_y = max(0.0, w_len - rep.t_cut)
        if rho_x <= SAMPLE_TOL and rho_y <= SAMPLE_TOL:
            pass
        elif rho_x <= SAMPLE_TOL or rho_y <= SAMPLE_TOL:
            violations.append({"index": k, "v": v.tolist(), "rho_x": rho_x, "rho_y": rho_y})
        else:
            K = max(K, rho_x / rho_y, rho_y / rho_x)

        if rho_x <= SAMPLE_TOL:
            length, angle = _frame_angle(sample, v)
            closed_angles = np.append(sample.angles, 2 * math.pi)
            t_f_x = float(np.interp(angle, closed_angles, np.append(sample.t_f_values, sample.t_f_values[0])))
            tfl_x = t_f_x - length
            tfl_y = rep.t_f - w_len
            if math.isfinite(tfl_x) and math.isfinite(tfl_y) and tfl_x > 0 and tfl_y > 0:
                K_tfl = max(K_tfl, tfl_x / tfl_y, tfl_y / tfl_x)
                tfl_count += 1

    return {
        "K": K,
        "n_samples": n_used,
        "n_skipped": len(flagged),
        "violations": violations,
        "passed": not violations,
        "K_tfl": K_tfl if tfl_count else math.inf,
        "flagged": flagged,
    }


# ---------------------------------------------------------------------------
# Lipschitz probe of the cut time
# ---------------------------------------------------------------------------


def _perturbed_data(
    model: ManifoldModel, x: np.ndarray, e: np.ndarray, t_cut: float, mode: str, eps: float, sign: float
) -> Tuple[np.ndarray, np.ndarray]:
    g = metric_at(model, x)
    if mode == "velocity":
        frame = frame_at(model, x, e)
        rotated = math.cos(eps) * frame[:, 0] + sign * math.sin(eps) * frame[:, 1]
        return x, rotated

    if mode == "geodesic-direction":
        y, vel = exp_map(model, TangentVector(x, sign * e), eps)
        w = vel.components if sign > 0 else -vel.components
        return y, w / math.sqrt(float(w @ metric_at(model, y) @ w))

    # focal-kernel: move x along the (near-)kernel of J01(t_cut), transporting e
    sol = fundamental_batch(model, x[None], e[None], t_cut)[0]
    _, _, vt = np.linalg.svd(sol.J01[-1])
    kernel = sol.trace.frame[0] @ vt[-1]
    trace = integrate_geodesic(model, TangentVector(x, sign * eps * kernel), 1.0)
    E0, E1 = trace.frame[0], trace.frame[-1]
    coords = E0.T @ g @ e
    y = trace.points[-1]
    w = E1 @ coords
    return y, w / math.sqrt(float(w @ metric_at(model, y) @ w))


def cut_lipschitz_probe(
    model: ManifoldModel,
    x: Any,
    e_v: TangentVector,
    mode: str = "velocity",
    eps: float = 1e-3,
    opts: Optional[CutOptions] = None,
) -> LipschitzProbeReport:
    """
    Difference quotients |t_cut(y, w) - t_cut(x, v)| / eps for perturbations
    restricted by mode, at eps and eps / 2.

    Modes: ``velocity`` rotates the direction at x by +-eps; ``geodesic-direction``
    slides (x, v) along its own geodesic by +-eps; ``focal-kernel`` moves x by
    +-eps along the smallest singular direction of J01(t_cut), transporting v.
    Perturbed data whose cut time cannot be resolved are skipped.

    Raises:
        PreconditionError: If the mode is unknown
    """
    if mode not in PROBE_MODES:
        raise PreconditionError(f"Unknown probe mode {mode!r}; valid modes: {', '.join(PROBE_MODES)}")
    xp = reduce_point(model, np.asarray(x, dtype=float))
    base = cut_time(model, xp, e_v, opts)
    e = base.direction.components

    epsilons = [eps, eps / 2.0]
    quotients: List[float] = []
    skipped = 0
    for ep in epsilons:
        worst = math.nan
        for sign in (1.0, -1.0):
            try:
                y, w = _perturbed_data(model, xp, e, base.t_cut, mode, ep, sign)
                rep = cut_time(model, y, TangentVector(y, w), opts)
            except GeometryError as err:
                logger.warning(f"cut_lipschitz_probe skipped a {mode} perturbation: {err}")
                skipped += 1
                continue
            q = abs(rep.t_cut - base.t_cut) / ep
            worst = q if math.isnan(worst) else max(worst, q)
        quotients.append(worst)

    return {
        "mode": mode,
        "epsilons": epsilons,
        "quotients": quotients,
        "max_quotient": max((q for q in quotients if not math.isnan(q)), default=math.nan),
        "stable": quotients_stable(quotients),
        "incomplete": skipped > 0,
        "skipped": skipped,
    }


def nonfocality_report(
    model: ManifoldModel,
    x_samples: Sequence[Sequence[float]],
    N: int,
    tolerance: float = FOCAL_CUT_TOL,
    opts: Optional[CutOptions] = None,
) -> NonfocalityReport:
    """
    Margins t_f - t_cut over domain samples and the delta(TM) estimate.

    The verdict is nonfocal iff every resolved margin exceeds the tolerance
    and no direction is unresolved.
    """
    margins: List[List[float]] = []
    all_reports: List[Optional[CutReport]] = []
    unresolved = 0
    for x in x_samples:
        sample = domain_sample(model, x, N, opts)
        m = sample.t_f_values - sample.t_cut_values
        margins.append([float(v) for v in m])
        all_reports.extend(sample.reports)
        unresolved += len(sample.unresolved)

    finite = [v for row in margins for v in row if not math.isnan(v)]
    min_margin = min(finite) if finite else math.nan
    nonfocal = bool(finite) and unresolved == 0 and min_margin > tolerance
    return {
        "nonfocal": nonfocal,
        "min_margin": min_margin,
        "delta_tm": delta_of_set(all_reports)["delta"],
        "n_unresolved": unresolved,
        "margins": margins,
        "tolerance": tolerance,
    }


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export_domain_csv(sample: DomainSample, path: Union[str, Path]) -> None:
    """Write angle, t_cut, t_f, delta_v, multiplicity, resolved per direction."""
    rows = [
        [
            sample.angles[i],
            sample.t_cut_values[i],
            sample.t_f_values[i],
            sample.delta_values[i],
            int(sample.multiplicities[i]),
            int(i not in sample.unresolved),
        ]
        for i in range(len(sample.angles))
    ]
    write_csv(Path(path), ["angle", "t_cut", "t_f", "delta_v", "multiplicity", "resolved"], rows)


def plot_domain_svg(sample: DomainSample, path: Union[str, Path]) -> None:
    """
    Polar plot of TCL(x) (solid) and TFL(x) (dashed) as an 800x800 px SVG.

    Output is byte-stable: the SVG id salt is fixed and no date is embedded.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    angles = np.append(sample.angles, sample.angles[0] + 2 * math.pi)
    t_cut = np.append(sample.t_cut_values, sample.t_cut_values[0])
    t_f = np.append(sample.t_f_values, sample.t_f_values[0])

    with matplotlib.rc_context({"svg.hashsalt": "mtwgeo", "svg.fonttype": "path"}):
        fig = Figure(figsize=(PLOT_SIZE_INCHES, PLOT_SIZE_INCHES), dpi=PLOT_DPI)
        ax = fig.add_subplot(projection="polar")
        ax.plot(angles, t_cut, color="tab:blue", linestyle="-", linewidth=1.5, label="TCL")
        focal = np.where(np.isfinite(t_f), t_f, np.nan)
        if np.isfinite(focal).any():
            ax.plot(angles, focal, color="tab:red", linestyle="--", linewidth=1.2, label="TFL")
        ax.set_title(f"{sample.model.name} at x = {np.round(sample.x, 6).tolist()}")
        ax.legend(loc="upper right")
        fig.savefig(path, format="svg", metadata={"Date": None})
    logger.info(f"Wrote {path}")
