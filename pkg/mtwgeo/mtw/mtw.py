"""
MTW tensor, extended cost and the sampled (MTW) conditions.

The tensor at (x, v) is -3/2 times the mixed fourth derivative
d^2/ds^2 d^2/dt^2 of c(exp_x(t xi), exp_x(v + s eta)), evaluated with a 3x3
stencil of second differences and one Richardson halving. The standard tensor
uses c = d^2/2; the extended one uses the half squared length of the
exponential branch continued from (x, v), which stays defined past the cut
locus as long as v is nonfocal.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import get_setting
from ..cutlocus import CutOptions, DomainSample, cut_margin, cut_time, domain_sample
from ..errors import (
    BranchError,
    GeometryError,
    InconsistentInputError,
    PreconditionError,
    StencilUnsafeError,
)
from ..geodesic import integrate_flow, raise_for_status
from ..jacobi import focal_times_batch
from ..manifold import (
    ManifoldModel,
    TangentVector,
    chart_difference,
    frame_at,
    in_domain,
    metric_at,
    reduce_point,
    sectional_curvature,
)
from ..types import GridSpec, KCFit, MtwEvaluationDict, OperationError, ScanReport, TenseurineFit, ZSpec
from ..utils import STATUS_OK, parallel_map, richardson, write_csv

logger = logging.getLogger(__name__)

# Constants
STENCIL_WEIGHTS = np.array([1.0, -2.0, 1.0])
CUT_MARGIN_FACTOR = 5.0
NEIGHBORHOOD_RADIUS = 0.5
NEWTON_MAX_ITER = 30
JACOBIAN_STEP = 1e-7
BRANCH_FAIL_RESIDUAL = 1e-9
C_MAX = 50.0
C_GRID_SIZE = 60
LOEPER_TOL = 2e-3
OBLIQUE_ANGLES = (math.pi / 4, math.pi / 3)
SCAN_CUT_TOL = 1e-5
SCAN_FAN_DIRECTIONS = 180
SCAN_MIN_DIRECTIONS = 8

GRID_PRESETS: Dict[str, GridSpec] = {
    "coarse": {"radii": [0.0, 0.3, 0.6], "n_directions": 4, "n_pairs": 4, "include_oblique": False},
    "fine": {"radii": [0.0, 0.2, 0.4, 0.6, 0.8], "n_directions": 8, "n_pairs": 8, "include_oblique": True},
}

CostFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class MtwEvaluation:
    """One evaluation of the (standard or extended) MTW tensor."""

    x: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    value: float
    plain_value: float
    step_t: float
    step_s: float
    richardson_estimate: Optional[float] = None
    error_estimate: Optional[float] = None
    extended: bool = False

    def to_dict(self) -> MtwEvaluationDict:
        return {
            "value": self.value,
            "plain_value": self.plain_value,
            "richardson_estimate": self.richardson_estimate,
            "error_estimate": self.error_estimate,
            "step_t": self.step_t,
            "step_s": self.step_s,
            "extended": self.extended,
        }


@dataclass(frozen=True, eq=False)
class ExtendedCostContext:
    """Anchor (x, v) of the local inverse of (x', v') -> (x', exp_x' v')."""

    model: ManifoldModel
    x: np.ndarray
    v: np.ndarray
    y: np.ndarray
    t_f: float
    n_steps: int
    newton_tolerance: float = 1e-12
    neighborhood_radius: float = NEIGHBORHOOD_RADIUS
    substeps: int = 8

    @property
    def speed(self) -> float:
        g = metric_at(self.model, self.x)
        return math.sqrt(max(float(self.v @ g @ self.v), 0.0))


# ---------------------------------------------------------------------------
# Fixed-discretization exponential
# ---------------------------------------------------------------------------


def _integration_steps(model: ManifoldModel, x: np.ndarray, v: np.ndarray) -> int:
    g = metric_at(model, x)
    length = math.sqrt(max(float(v @ g @ v), 0.0)) + 0.1
    return max(4, int(math.ceil(length / float(get_setting("shooting_step")))))


def _exp_fixed(
    model: ManifoldModel, bases: np.ndarray, vels: np.ndarray, n_steps: int, strict: bool = True
) -> Tuple[np.ndarray, np.ndarray]:
    """
    exp with one step count for every row.

    A shared step count keeps the discrete map smooth in its inputs, which the
    fourth-order stencil relies on.
    """
    bases = np.atleast_2d(bases)
    vels = np.atleast_2d(vels)
    if model.analytic_exp is not None:
        points, _ = model.analytic_exp(bases, vels)
        points = reduce_point(model, np.asarray(points, dtype=float))
        return points, np.all(np.isfinite(points), axis=1)
    flow = integrate_flow(model, bases, vels, 1.0, n_steps)
    ok = flow.status == STATUS_OK
    if strict and not ok.all():
        raise_for_status(int(flow.status[~ok][0]), "mtw stencil")
    return flow.points[-1], ok


# ---------------------------------------------------------------------------
# Extended cost
# ---------------------------------------------------------------------------


def make_extended_cost_context(
    model: ManifoldModel,
    x: Any,
    v: Union[TangentVector, Sequence[float]],
    newton_tolerance: Optional[float] = None,
    neighborhood_radius: float = NEIGHBORHOOD_RADIUS,
    t_f: Optional[float] = None,
) -> ExtendedCostContext:
    """
    Build the branch anchor for c-hat at (x, v).

    Raises:
        PreconditionError: If v is not in NF(x), i.e. exp_x is singular at
            some tv with t in [0, 1]
    """
    xp = reduce_point(model, np.asarray(x, dtype=float))
    comps = v.components if isinstance(v, TangentVector) else np.asarray(v, dtype=float)
    if not in_domain(model, xp):
        raise PreconditionError(f"Anchor {xp.tolist()} is outside the chart")
    g = metric_at(model, xp)
    speed = math.sqrt(max(float(comps @ g @ comps), 0.0))

    if t_f is None:
        if speed == 0:
            t_f = math.inf
        elif model.analytic_focal is not None:
            t_f = float(model.analytic_focal(xp, comps / speed))
        else:
            horizon = speed + CUT_MARGIN_FACTOR * float(get_setting("mtw_step"))
            t_f = focal_times_batch(model, xp[None], (comps / speed)[None], t_max=horizon)[0].t_f
    if speed >= t_f:
        raise PreconditionError(f"Anchor |v| = {speed:.6g} is not inside NF(x) (t_f = {t_f:.6g})")

    n_steps = _integration_steps(model, xp, comps)
    y, _ = _exp_fixed(model, xp[None], comps[None], n_steps)
    return ExtendedCostContext(
        model=model,
        x=xp,
        v=comps.copy(),
        y=y[0],
        t_f=float(t_f),
        n_steps=n_steps,
        newton_tolerance=float(get_setting("newton_tol")) if newton_tolerance is None else newton_tolerance,
        neighborhood_radius=neighborhood_radius,
        substeps=int(get_setting("newton_substeps")),
    )


def _newton_branch(
    ctx: ExtendedCostContext, xs: np.ndarray, ys: np.ndarray, w: np.ndarray
) -> np.ndarray:
    """Solve exp_{xs}(w) = ys row by row, starting from w."""
    model = ctx.model
    n = model.dim
    batch = len(w)
    eye = np.eye(n)

    def residual(bases: np.ndarray, vels: np.ndarray, targets: np.ndarray) -> np.ndarray:
        points, ok = _exp_fixed(model, bases, vels, ctx.n_steps, strict=False)
        F = chart_difference(model, targets, points)
        F[~ok] = np.inf
        return F

    F = residual(xs, w, ys)
    res = np.linalg.norm(F, axis=1)
    polished = np.zeros(batch, dtype=bool)
    for _ in range(NEWTON_MAX_ITER):
        active = np.isfinite(res) & ~polished
        if not active.any():
            break
        idx = np.flatnonzero(active)
        wa = w[idx]
        eps = JACOBIAN_STEP * np.maximum(1.0, np.linalg.norm(wa, axis=1))
        probes = (wa[:, None, :] + eps[:, None, None] * eye[None]).reshape(-1, n)
        Fp = residual(np.repeat(xs[idx], n, axis=0), probes, np.repeat(ys[idx], n, axis=0))
        jac = np.swapaxes((Fp.reshape(len(idx), n, n) - F[idx][:, None, :]) / eps[:, None, None], 1, 2)
        finite = np.all(np.isfinite(jac), axis=(1, 2))
        finite &= np.abs(np.linalg.det(np.where(finite[:, None, None], jac, 1.0))) > 1e-14
        if not finite.all():
            res[idx[~finite]] = np.inf
        good = idx[finite]
        if len(good) == 0:
            break
        delta = -np.linalg.solve(jac[finite], F[good][..., None])[..., 0]
        trial = w[good] + delta
        Ft = residual(xs[good], trial, ys[good])
        rt = np.linalg.norm(Ft, axis=1)
        better = rt < res[good]
        converged = res[good] <= ctx.newton_tolerance
        # one last step after convergence, kept only if it improves
        polished[good[converged]] = True
        take = good[better]
        w[take] = trial[better]
        F[take] = Ft[better]
        res[take] = rt[better]
        stalled = good[~better & ~converged]
        polished[stalled] = True

    if not np.all(res <= BRANCH_FAIL_RESIDUAL):
        worst = float(np.max(res))
        raise BranchError(f"Newton continuation did not converge (residual {worst:.3e})")
    return w


def _continue_branch(ctx: ExtendedCostContext, targets_x: np.ndarray, targets_y: np.ndarray) -> np.ndarray:
    """Follow the branch through (x, v) to each (x', y') in ctx.substeps substeps."""
    model = ctx.model
    batch = len(targets_x)
    dx = chart_difference(model, ctx.x, targets_x)
    dy = chart_difference(model, ctx.y, targets_y)
    w = np.repeat(ctx.v[None], batch, axis=0)
    for k in range(1, ctx.substeps + 1):
        lam = k / ctx.substeps
        xs = reduce_point(model, ctx.x + lam * dx)
        ys = reduce_point(model, ctx.y + lam * dy)
        prev = w.copy()
        w = _newton_branch(ctx, xs, ys, w)
        jump = float(np.max(np.linalg.norm(w - prev, axis=1)))
        if jump > ctx.neighborhood_radius:
            raise BranchError(
                f"Branch jumped by {jump:.3g} (> {ctx.neighborhood_radius:g}) at substep {k}"
            )
    return w


def _branch_costs(ctx: ExtendedCostContext, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    w = _continue_branch(ctx, xs, ys)
    g = ctx.model.metric_eval(xs)
    return 0.5 * np.einsum("zi,zij,zj->z", w, g, w)


def extended_cost(ctx: ExtendedCostContext, x_prime: Any, y_prime: Any) -> float:
    """
    c-hat_(x,v)(x', y') = |w'|^2 / 2 where exp_x'(w') = y' on the branch through v.

    Raises:
        BranchError: If Newton diverges or the branch jumps between substeps

    Example:
        >>> sphere = load_manifold("sphere_r1")
        >>> ctx = make_extended_cost_context(sphere, [np.pi / 2, 0], [np.pi / 2, 0])
        >>> round(extended_cost(ctx, ctx.x, ctx.y), 4)  # pi^2 / 8
        1.2337
    """
    xs = reduce_point(ctx.model, np.asarray(x_prime, dtype=float))[None]
    ys = reduce_point(ctx.model, np.asarray(y_prime, dtype=float))[None]
    return float(_branch_costs(ctx, xs, ys)[0])


# ---------------------------------------------------------------------------
# Tensor
# ---------------------------------------------------------------------------


def _stencil(
    model: ManifoldModel,
    x: np.ndarray,
    v: np.ndarray,
    xi: np.ndarray,
    eta: np.ndarray,
    ht: float,
    hs: float,
    cost: CostFn,
    n_steps: int,
) -> float:
    offsets = np.array([-1.0, 0.0, 1.0])
    xs, _ = _exp_fixed(model, np.repeat(x[None], 3, axis=0), (offsets * ht)[:, None] * xi, n_steps)
    ys, _ = _exp_fixed(model, np.repeat(x[None], 3, axis=0), v + (offsets * hs)[:, None] * eta, n_steps)
    f = cost(np.repeat(xs, 3, axis=0), np.tile(ys, (3, 1))).reshape(3, 3)
    return float(-1.5 * (STENCIL_WEIGHTS @ f @ STENCIL_WEIGHTS) / (ht * ht * hs * hs))


def _evaluate(
    model: ManifoldModel,
    x: np.ndarray,
    v: np.ndarray,
    xi: np.ndarray,
    eta: np.ndarray,
    step: float,
    cost: CostFn,
    n_steps: int,
    extended: bool,
    use_richardson: bool,
) -> MtwEvaluation:
    g = metric_at(model, x)
    xi_len = math.sqrt(float(xi @ g @ xi))
    eta_len = math.sqrt(float(eta @ g @ eta))
    if xi_len == 0 or eta_len == 0:
        return MtwEvaluation(x, v, xi, eta, 0.0, 0.0, step, step, 0.0, 0.0, extended)
    ht, hs = step / xi_len, step / eta_len
    coarse = _stencil(model, x, v, xi, eta, ht, hs, cost, n_steps)
    if not use_richardson:
        return MtwEvaluation(x, v, xi, eta, coarse, coarse, ht, hs, None, None, extended)
    fine = _stencil(model, x, v, xi, eta, ht / 2, hs / 2, cost, n_steps)
    extrap, err = richardson(coarse, fine, order=2)
    return MtwEvaluation(x, v, xi, eta, extrap, coarse, ht, hs, extrap, err, extended)


def _as_components(vec: Union[TangentVector, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(vec, TangentVector):
        return vec.components
    return np.asarray(vec, dtype=float).reshape(-1)


def _check_stencil_room(
    model: ManifoldModel,
    x: np.ndarray,
    v: np.ndarray,
    eta: np.ndarray,
    step: float,
    t_cut: Optional[float],
    domain: Optional[DomainSample],
) -> None:
    """Require t_cut(w/|w|) - |w| >= CUT_MARGIN_FACTOR * step at w = v and w = v +- step eta/|eta|."""
    g = metric_at(model, x)
    eta_len = math.sqrt(max(float(eta @ g @ eta), 0.0))
    offsets = [0.0, -1.0, 1.0] if eta_len > 0 else [0.0]
    margin = CUT_MARGIN_FACTOR * step
    for k in offsets:
        w = v + (k * step / eta_len) * eta if k else v
        length = math.sqrt(max(float(w @ g @ w), 0.0))
        if length == 0:
            continue
        if domain is not None:
            room = cut_margin(domain, w)
        elif k == 0 and t_cut is not None:
            room = t_cut - length
        else:
            room = cut_time(model, x, TangentVector(x, w / length)).t_cut - length
        if room < margin:
            raise StencilUnsafeError(
                f"Stencil velocity {w.tolist()} is within {margin:g} of the cut locus "
                f"(|w| = {length:.6g}, t_cut = {length + room:.6g})"
            )


def mtw_tensor(
    model: ManifoldModel,
    x: Any,
    v: Union[TangentVector, Sequence[float]],
    xi: Union[TangentVector, Sequence[float]],
    eta: Union[TangentVector, Sequence[float]],
    steps: Optional[float] = None,
    use_richardson: bool = True,
    t_cut: Optional[float] = None,
    domain: Optional[DomainSample] = None,
) -> MtwEvaluation:
    """
    MTW tensor S_(x,v)(xi, eta) from d^2/2 by finite differences.

    Args:
        model: Manifold model
        x: Base point
        v: Velocity in I(x)
        xi, eta: Tangent vectors at x
        steps: Stencil step in metric length; defaults to the mtw_step setting
        use_richardson: Add a half-step evaluation and extrapolate
        t_cut: Cut time along v/|v| if already known
        domain: Sampled injectivity domain at x; when given, every stencil
            velocity is checked against its interpolated cut time

    Returns:
        MtwEvaluation whose value is the extrapolated estimate when
        use_richardson is set

    Raises:
        StencilUnsafeError: If a stencil velocity v or v +- step eta/|eta| is
            within 5 steps of the cut time in its own direction

    Example:
        >>> sphere = load_manifold("sphere_r1")
        >>> ev = mtw_tensor(sphere, [np.pi / 2, 0], [0, 0], [1, 0], [0, 1])
        >>> abs(ev.value - 1.0) < 2e-3
        True
    """
    step = float(get_setting("mtw_step")) if steps is None else float(steps)
    if not step > 0:
        raise PreconditionError(f"Stencil step must be positive, got {step}")
    xp = reduce_point(model, np.asarray(x, dtype=float))
    comps = _as_components(v)
    eta_comps = _as_components(eta)
    if domain is not None and np.any(np.abs(domain.x - xp) > 1e-12):
        raise PreconditionError(f"Domain sample is based at {domain.x.tolist()}, not at {xp.tolist()}")
    # stencils around v = 0 stay within one step of the origin
    if domain is not None or np.any(comps != 0):
        _check_stencil_room(model, xp, comps, eta_comps, step, t_cut, domain)

    n_steps = _integration_steps(model, xp, comps)
    if model.analytic_dist is not None:
        dist = model.analytic_dist

        def cost(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
            return np.array([0.5 * dist(a, b) ** 2 for a, b in zip(xs, ys)])

    else:
        # inside I(x) the minimizing velocity is the branch through v
        ctx = make_extended_cost_context(model, xp, comps, t_f=math.inf)

        def cost(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
            return _branch_costs(ctx, xs, ys)

    return _evaluate(model, xp, comps, _as_components(xi), eta_comps, step, cost, n_steps, False, use_richardson)


def extended_mtw_tensor(
    ctx: ExtendedCostContext,
    xi: Union[TangentVector, Sequence[float]],
    eta: Union[TangentVector, Sequence[float]],
    steps: Optional[float] = None,
    use_richardson: bool = True,
) -> MtwEvaluation:
    """
    Extended MTW tensor S-bar_(x,v)(xi, eta) from c-hat on the branch through v.

    Raises:
        BranchError: Propagated from the branch continuation
        StencilUnsafeError: If the stencil leaves NF(x) by the focal margin
    """
    step = float(get_setting("mtw_step")) if steps is None else float(steps)
    if not step > 0:
        raise PreconditionError(f"Stencil step must be positive, got {step}")
    if ctx.t_f - ctx.speed < CUT_MARGIN_FACTOR * step:
        raise StencilUnsafeError(
            f"|v| = {ctx.speed:.6g} is within {CUT_MARGIN_FACTOR * step:g} of the focal time {ctx.t_f:.6g}"
        )

    def cost(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        return _branch_costs(ctx, xs, ys)

    return _evaluate(
        ctx.model,
        ctx.x,
        ctx.v,
        _as_components(xi),
        _as_components(eta),
        step,
        cost,
        ctx.n_steps,
        True,
        use_richardson,
    )


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


def default_x_points(model: ManifoldModel) -> List[List[float]]:
    """Chart midpoint, plus the lower edge of a periodic first coordinate."""
    lower = np.asarray(model.chart.lower, dtype=float)
    upper = np.asarray(model.chart.upper, dtype=float)
    mid = 0.5 * (lower + upper)
    points = [mid.tolist()]
    if model.chart.periodic[0]:
        points.append([float(lower[0])] + mid[1:].tolist())
    return points


def resolve_grid(model: ManifoldModel, grid_spec: Union[str, GridSpec, None] = None) -> GridSpec:
    """
    Fill a GridSpec from a preset name or a partial spec.

    Raises:
        PreconditionError: If the preset name is unknown
    """
    if grid_spec is None:
        grid_spec = "coarse"
    if isinstance(grid_spec, str):
        if grid_spec not in GRID_PRESETS:
            raise PreconditionError(
                f"Unknown grid preset {grid_spec!r}; valid presets: {', '.join(sorted(GRID_PRESETS))}"
            )
        spec: GridSpec = dict(GRID_PRESETS[grid_spec])  # type: ignore[assignment]
    else:
        spec = dict(GRID_PRESETS["coarse"])  # type: ignore[assignment]
        spec.update(grid_spec)
    if not spec.get("x_points"):
        spec["x_points"] = default_x_points(model)
    return spec


def _unit_pairs(frame: np.ndarray, n_pairs: int, include_oblique: bool) -> List[Tuple[np.ndarray, np.ndarray, float]]:
    """(xi, eta, <xi, eta>) for unit pairs rotated through [0, pi)."""
    pairs = []
    angles = [math.pi / 2] + (list(OBLIQUE_ANGLES) if include_oblique else [])
    for j in range(n_pairs):
        theta = math.pi * j / n_pairs
        xi = frame @ np.array([math.cos(theta), math.sin(theta)])
        for gap in angles:
            eta = frame @ np.array([math.cos(theta + gap), math.sin(theta + gap)])
            pairs.append((xi, eta, math.cos(gap)))
    return pairs


def _error_entry(e: GeometryError, operation: str, index: int) -> OperationError:
    return {"success": False, "error": str(e), "error_code": e.error_code, "operation": operation, "index": index}


def _scan_domain(model: ManifoldModel, x: np.ndarray, n_dir: int) -> DomainSample:
    """Sampled I(x) on a grid containing the n_dir scan directions, at scan resolution."""
    N = n_dir * math.ceil(SCAN_MIN_DIRECTIONS / n_dir)
    opts: CutOptions = {"tol": SCAN_CUT_TOL, "distance": {"n_directions": SCAN_FAN_DIRECTIONS}}
    return domain_sample(model, x, N, opts)


def _scan_samples(
    model: ManifoldModel, spec: GridSpec, include_oblique: bool
) -> Tuple[List[Dict[str, Any]], int, List[OperationError]]:
    """Evaluate the standard tensor on every (x, v, pair) of the grid."""
    if model.dim != 2:
        raise PreconditionError("MTW scans are implemented for surfaces only")
    radii = [float(r) for r in spec.get("radii", [0.0])]
    n_dir = int(spec.get("n_directions", 4))
    n_pairs = int(spec.get("n_pairs", 4))
    errors: List[OperationError] = []

    jobs: List[Dict[str, Any]] = []
    for x in spec["x_points"]:
        xp = reduce_point(model, np.asarray(x, dtype=float))
        frame = frame_at(model, xp)
        pairs = _unit_pairs(frame, n_pairs, include_oblique)
        velocities: List[np.ndarray] = []
        if any(r == 0 for r in radii):
            velocities.append(np.zeros(model.dim))
        positive = [r for r in radii if r > 0]
        domain: Optional[DomainSample] = None
        if positive:
            # one cut time per direction, shared by every radius and stencil
            domain = _scan_domain(model, xp, n_dir)
            stride = len(domain.angles) // n_dir
            for k in range(n_dir):
                i = k * stride
                if i in domain.unresolved:
                    err = domain.errors[domain.unresolved.index(i)]
                    errors.append({**err, "index": len(errors)})  # type: ignore[typeddict-item]
                    continue
                t_cut = float(domain.t_cut_values[i])
                for r in positive:
                    velocities.append(r * t_cut * domain.directions[i])
        for v in velocities:
            for xi, eta, ip in pairs:
                jobs.append({"x": xp, "v": v, "xi": xi, "eta": eta, "inner": ip, "domain": domain})

    def one(job: Dict[str, Any]) -> Dict[str, Any]:
        try:
            ev = mtw_tensor(model, job["x"], job["v"], job["xi"], job["eta"], domain=job["domain"])
            return {"status": "ok", "value": ev.value, "error_estimate": ev.error_estimate}
        except StencilUnsafeError as err:
            return {"status": "skipped", "error": err}
        except GeometryError as err:
            return {"status": "error", "error": err}

    outcomes = parallel_map(one, jobs)
    samples: List[Dict[str, Any]] = []
    skipped = 0
    for i, (job, out) in enumerate(zip(jobs, outcomes)):
        if out["status"] == "ok":
            samples.append(
                {
                    "x": job["x"].tolist(),
                    "v": job["v"].tolist(),
                    "xi": job["xi"].tolist(),
                    "eta": job["eta"].tolist(),
                    "inner": job["inner"],
                    "value": out["value"],
                    "error_estimate": out["error_estimate"],
                }
            )
        elif out["status"] == "skipped":
            skipped += 1
        else:
            errors.append(_error_entry(out["error"], "mtw_tensor", i))
            logger.error(f"MTW evaluation {i} failed: {out['error']}")
    if skipped:
        logger.warning(f"MTW scan on {model.name}: {skipped} stencil-unsafe points skipped")
    return samples, skipped, errors


def mtw_condition_scan(
    model: ManifoldModel,
    grid_spec: Union[str, GridSpec, None] = None,
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> ScanReport:
    """
    Minimum of S_(x,v)(xi, eta) over orthogonal unit pairs on a grid.

    The verdict passes when the minimum is at least -tolerance (the
    finite-difference noise floor by default).

    Example:
        >>> torus = load_manifold("torus_2pi")
        >>> mtw_condition_scan(torus, "coarse")["passed"]
        True
    """
    spec = resolve_grid(model, grid_spec)
    floor = float(get_setting("mtw_noise_floor")) if tolerance is None else float(tolerance)
    samples, skipped, errors = _scan_samples(model, spec, include_oblique=False)

    if samples:
        best = min(range(len(samples)), key=lambda i: samples[i]["value"])
        min_value = float(samples[best]["value"])
        argmin: Optional[Dict[str, Any]] = {k: samples[best][k] for k in ("x", "v", "xi", "eta", "value")}
    else:
        min_value, argmin = math.nan, None

    passed = bool(samples) and min_value >= -floor
    logger.info(
        f"MTW scan on {model.name}: {len(samples)} evaluations, min {min_value:.6g}, "
        f"{'pass' if passed else 'fail'}"
    )
    report: ScanReport = {
        "grid": spec,
        "n_evaluated": len(samples),
        "n_skipped": skipped,
        "n_errors": len(errors),
        "min_value": min_value,
        "argmin": argmin,
        "tolerance": floor,
        "passed": passed,
        "errors": errors,
    }
    if keep_samples:
        report["samples"] = samples
    return report


def _c_grid(c_max: float) -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(1e-3, c_max, C_GRID_SIZE)])


def mtw_kc_fit(
    model: ManifoldModel,
    grid_spec: Union[str, GridSpec, None] = None,
    c_max: float = C_MAX,
) -> KCFit:
    """
    Largest K, with the smallest C reaching it, such that
    S >= -C |<xi, eta>| |xi| |eta| + K |xi|^2 |eta|^2 on every sample.

    C ranges over 0 and a geometric grid up to c_max; cap_hit marks a K that
    was still growing at c_max. An empty sample reports K = -inf.
    """
    spec = resolve_grid(model, grid_spec)
    spec["include_oblique"] = True
    samples, _, _ = _scan_samples(model, spec, include_oblique=True)
    if not samples:
        logger.warning(f"K/C fit on {model.name}: no usable samples")
        return {"K": -math.inf, "C": c_max, "cap_hit": True, "c_max": c_max, "n_samples": 0}

    values = np.array([s["value"] for s in samples])
    inner = np.abs(np.array([s["inner"] for s in samples]))
    grid = _c_grid(c_max)
    K_of_C = np.array([float(np.min(values + c * inner)) for c in grid])
    K_best = float(K_of_C[-1])
    floor = float(get_setting("mtw_noise_floor"))
    first = int(np.argmax(K_of_C >= K_best - floor))
    cap_hit = bool(K_of_C[-1] > K_of_C[-2] + floor)
    if cap_hit:
        logger.warning(f"K/C fit on {model.name}: K still increasing at C = {c_max:g}")
    return {
        "K": K_best,
        "C": float(grid[first]),
        "cap_hit": cap_hit,
        "c_max": c_max,
        "n_samples": len(samples),
    }


def _z_radii(z_spec: ZSpec, t_cut: float) -> List[float]:
    mode = z_spec.get("mode", "enlargement")
    n_radii = int(z_spec.get("n_radii", 4))
    if mode == "enlargement":
        mu = float(z_spec.get("mu", 0.0))
        return list(np.linspace(0.5 * t_cut, t_cut + mu, n_radii))
    if mode == "band":
        a = float(z_spec.get("a", 0.2))
        center = float(z_spec.get("center", 1.0))
        return list(t_cut * np.linspace(center - a, center + a, n_radii))
    raise PreconditionError(f"Unknown Z mode {mode!r}; valid modes: enlargement, band")


def tenseurine_constants(
    model: ManifoldModel,
    z_spec: ZSpec,
    grid_spec: Union[str, GridSpec, None] = None,
) -> TenseurineFit:
    """
    Smallest (C, D), C first, with
    S-bar_(x,v)(xi, eta) >= -C |<xi, eta>| |xi| |eta| - D rho_x(v, I(x)) |xi|^2 |eta|^2
    for v sampled in Z and unit pairs (xi, eta).

    Raises:
        InconsistentInputError: If a Z point is not inside NF(x) by the stencil margin
    """
    spec = resolve_grid(model, grid_spec)
    n_dir = int(z_spec.get("n_directions", spec.get("n_directions", 4)))
    n_pairs = int(z_spec.get("n_pairs", spec.get("n_pairs", 4)))
    step = float(get_setting("mtw_step"))
    floor = float(get_setting("mtw_noise_floor"))

    contexts: List[Tuple[Dict[str, Any], ExtendedCostContext, list]] = []
    for x in spec["x_points"]:
        xp = reduce_point(model, np.asarray(x, dtype=float))
        frame = frame_at(model, xp)
        pairs = _unit_pairs(frame, n_pairs, True)
        for k in range(n_dir):
            ang = 2 * math.pi * k / n_dir
            e = frame @ np.array([math.cos(ang), math.sin(ang)])
            rep = cut_time(model, xp, TangentVector(xp, e))
            for r in _z_radii(z_spec, rep.t_cut):
                if rep.t_f - r < CUT_MARGIN_FACTOR * step:
                    raise InconsistentInputError(
                        f"Z point |v| = {r:.6g} at {xp.tolist()} is within the focal margin (t_f = {rep.t_f:.6g})"
                    )
                meta = {"x": xp.tolist(), "v": (r * e).tolist(), "rho": max(0.0, r - rep.t_cut)}
                contexts.append((meta, make_extended_cost_context(model, xp, r * e, t_f=rep.t_f), pairs))

    def one(item: Tuple[Dict[str, Any], ExtendedCostContext, list]) -> List[Dict[str, Any]]:
        meta, ctx, pairs = item
        out = []
        for xi, eta, ip in pairs:
            ev = extended_mtw_tensor(ctx, xi, eta)
            out.append(dict(meta, inner=ip, value=ev.value))
        return out

    samples = [s for chunk in parallel_map(one, contexts) for s in chunk]
    values = np.array([s["value"] for s in samples])
    inner = np.abs(np.array([s["inner"] for s in samples]))
    rho = np.array([s["rho"] for s in samples])

    for c in _c_grid(C_MAX):
        slack = values + c * inner + floor
        inside = rho <= 0
        if np.any(slack[inside] < 0):
            continue
        outside = ~inside
        D = float(np.max(np.maximum(0.0, -slack[outside] / rho[outside]))) if outside.any() else 0.0
        logger.info(f"Extended MTW constants on {model.name}: C={c:.4g}, D={D:.4g}")
        return {
            "C": float(c),
            "D": D,
            "feasible": True,
            "n_samples": len(samples),
            "noise_floor": floor,
            "violations": [],
        }

    slack = values + C_MAX * inner + floor
    violations = [samples[i] for i in np.flatnonzero((rho <= 0) & (slack < 0))]
    logger.warning(f"Extended MTW constants on {model.name}: infeasible up to C = {C_MAX:g}")
    return {
        "C": math.inf,
        "D": math.inf,
        "feasible": False,
        "n_samples": len(samples),
        "noise_floor": floor,
        "violations": violations,
    }


def loeper_check(
    model: ManifoldModel,
    x: Any,
    pairs: Optional[Sequence[Tuple[Sequence[float], Sequence[float]]]] = None,
    n_pairs: int = 16,
    tolerance: float = LOEPER_TOL,
) -> Dict[str, Any]:
    """
    Compare S_(x,0)(xi, eta) with the sectional curvature for orthonormal pairs.

    Returns:
        Dict with per-pair values, the largest defect and the verdict
    """
    xp = reduce_point(model, np.asarray(x, dtype=float))
    if pairs is None:
        pairs = [(xi, eta) for xi, eta, _ in _unit_pairs(frame_at(model, xp), n_pairs, False)]
    zero = np.zeros(model.dim)
    rows = []
    for xi, eta in pairs:
        value = mtw_tensor(model, xp, zero, xi, eta).value
        sigma = sectional_curvature(model, xp, xi, eta)
        rows.append(
            {
                "xi": list(map(float, xi)),
                "eta": list(map(float, eta)),
                "mtw": value,
                "sectional": sigma,
                "defect": abs(value - sigma),
            }
        )
    max_defect = max(r["defect"] for r in rows)
    return {
        "x": xp.tolist(),
        "pairs": rows,
        "max_defect": max_defect,
        "tolerance": tolerance,
        "passed": max_defect <= tolerance,
    }


def export_scan_csv(report: ScanReport, path: Union[str, Path]) -> None:
    """Per-evaluation CSV of a scan run with keep_samples."""
    rows = []
    for s in report.get("samples", []):
        rows.append(s["x"] + s["v"] + s["xi"] + s["eta"] + [s["inner"], s["value"], s["error_estimate"]])
    write_csv(
        Path(path),
        ["x0", "x1", "v0", "v1", "xi0", "xi1", "eta0", "eta1", "inner", "value", "error_estimate"],
        rows,
    )
