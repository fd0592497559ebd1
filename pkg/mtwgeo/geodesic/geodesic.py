"""
Geodesic flow, exponential map, parallel transport and geodesic distance.

All integrations go through one batched RK4 flow over the state
[x, v, E, A, A', B, B'] where E is a parallel frame and (A, B) are the matrix
Jacobi fields with (Id, 0) and (0, Id) initial data, written in that frame.
Models with a recentering hook (the round sphere) integrate each row in its
own rotated chart and map the results back.
"""

import logging
import math
import threading
import weakref
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, TypedDict, Union

import numpy as np

from ..config import get_setting
from ..errors import (
    ChartExitError,
    DegenerateInputError,
    DomainError,
    IntegrationError,
    PreconditionError,
)
from ..manifold import (
    ManifoldModel,
    TangentVector,
    chart_difference,
    christoffel_field,
    curvature_operator,
    frame_at,
    in_domain,
    metric_at,
    norm,
    outside_mask,
    reduce_point,
)
from ..utils import (
    STATUS_CHART_EXIT,
    STATUS_NON_FINITE,
    STATUS_OK,
    angle_grid,
    rk4_integrate,
    write_csv,
)

logger = logging.getLogger(__name__)

# Constants
MAX_CANDIDATES = 32
NEWTON_MAX_ITER = 50
NEWTON_RESIDUAL = 1e-10
LINE_SEARCH_HALVINGS = 10
JACOBIAN_STEP = 1e-6
DEDUP_TOL = 1e-6


class DistanceOptions(TypedDict, total=False):
    """Options of the numerical distance oracle."""

    n_directions: int
    step: float
    refine_step: float
    refine_tol: float
    hints: List[Any]
    length_gap: float
    endpoint_gap: float


@dataclass(frozen=True, eq=False)
class GeodesicTrace:
    """Sampled geodesic t -> exp_x(t v) with velocities and an optional parallel frame."""

    initial: TangentVector
    grid: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    frame: Optional[np.ndarray] = None

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.initial.components))


@dataclass(frozen=True, eq=False)
class DistanceResult:
    """Geodesic distance d(x, y) with every near-minimizing initial velocity found."""

    value: float
    minimizer_velocity: TangentVector
    multiplicity: int
    converged: bool
    minimizers: Tuple[TangentVector, ...] = ()
    residual: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "minimizer_velocity": self.minimizer_velocity.components.tolist(),
            "multiplicity": self.multiplicity,
            "converged": self.converged,
            "minimizers": [w.components.tolist() for w in self.minimizers],
            "residual": self.residual,
        }


@dataclass
class FlowResult:
    """Raw output of a batched flow integration, in the original chart."""

    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    frames: Optional[np.ndarray]
    jacobi: Optional[np.ndarray]
    status: np.ndarray


# ---------------------------------------------------------------------------
# Flow
# ---------------------------------------------------------------------------


def _flow_rhs(model: ManifoldModel, with_frame: bool, with_jacobi: bool):
    n = model.dim
    nn = n * n

    def rhs(y: np.ndarray) -> np.ndarray:
        x = y[:, :n]
        v = y[:, n : 2 * n]
        gamma = christoffel_field(model, x)
        parts = [v, -np.einsum("zkij,zi,zj->zk", gamma, v, v)]
        if with_frame:
            E = y[:, 2 * n : 2 * n + nn].reshape(-1, n, n)
            dE = -np.einsum("zkij,zi,zja->zka", gamma, v, E)
            parts.append(dE.reshape(-1, nn))
            if with_jacobi:
                off = 2 * n + nn
                blocks = y[:, off : off + 4 * nn].reshape(-1, 4, n, n)
                R = curvature_operator(model, x, v, E)
                parts.extend(
                    [
                        blocks[:, 1].reshape(-1, nn),
                        -(R @ blocks[:, 0]).reshape(-1, nn),
                        blocks[:, 3].reshape(-1, nn),
                        -(R @ blocks[:, 2]).reshape(-1, nn),
                    ]
                )
        return np.concatenate(parts, axis=1)

    return rhs


def initial_frames(model: ManifoldModel, bases: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    """Orthonormal frames with e_1 = v/|v| (chart basis order when v = 0)."""
    frames = np.empty(bases.shape + (bases.shape[-1],))
    for b in range(bases.shape[0]):
        first = velocities[b] if np.any(velocities[b] != 0) else None
        frames[b] = frame_at(model, bases[b], first)
    return frames


def identity_jacobi(batch: int, n: int) -> np.ndarray:
    """Initial blocks (J01, J01', J10, J10') = (Id, 0, 0, Id)."""
    blocks = np.zeros((batch, 4, n, n))
    blocks[:, 0] = np.eye(n)
    blocks[:, 3] = np.eye(n)
    return blocks


def integrate_flow(
    model: ManifoldModel,
    bases: np.ndarray,
    velocities: np.ndarray,
    t_max: Union[float, np.ndarray],
    n_steps: int,
    frames: Optional[np.ndarray] = None,
    jacobi_state: Optional[np.ndarray] = None,
    record: bool = False,
) -> FlowResult:
    """
    Integrate B geodesics (optionally with frames and Jacobi blocks) to t_max.

    Args:
        bases: (B, n) chart points
        velocities: (B, n) initial velocities
        t_max: Final time, scalar or per row
        n_steps: Number of RK4 steps shared by every row
        frames: (B, n, n) initial frames (columns), required for jacobi_state
        jacobi_state: (B, 4, n, n) initial (J01, J01', J10, J10')
        record: Keep the whole grid instead of only the endpoints

    Returns:
        FlowResult with arrays of shape (K, B, ...) where K is n_steps + 1 or 2
    """
    n = model.dim
    bases = np.atleast_2d(np.asarray(bases, dtype=float))
    velocities = np.atleast_2d(np.asarray(velocities, dtype=float))
    batch = bases.shape[0]
    t_row = np.broadcast_to(np.asarray(t_max, dtype=float), (batch,)).copy()
    with_frame = frames is not None
    with_jacobi = jacobi_state is not None
    if with_jacobi and not with_frame:
        raise PreconditionError("Jacobi integration needs a parallel frame")

    rotation = model.recenter(bases, velocities) if model.recenter is not None else None
    if rotation is not None:
        x0 = rotation.points_to_work(bases)
        v0 = rotation.vectors_to_work(bases, velocities[..., None])[..., 0]
        E0 = rotation.vectors_to_work(bases, frames) if with_frame else None
    else:
        x0, v0, E0 = bases, velocities, frames

    parts = [x0, v0]
    if with_frame:
        parts.append(E0.reshape(batch, n * n))
    if with_jacobi:
        parts.append(np.asarray(jacobi_state, dtype=float).reshape(batch, 4 * n * n))
    y0 = np.concatenate(parts, axis=1)

    margin = float(get_setting("guard_margin"))

    def guard(y: np.ndarray) -> np.ndarray:
        return outside_mask(model, y[:, :n], margin)

    h = t_row / max(n_steps, 1)
    history, status = rk4_integrate(
        _flow_rhs(model, with_frame, with_jacobi), y0, h, n_steps, record=record, guard=guard
    )
    if n_steps == 0:
        history = history[:1] if record else np.stack([history[0], history[0]])

    xs = history[..., :n]
    vs = history[..., n : 2 * n]
    Es = history[..., 2 * n : 2 * n + n * n].reshape(history.shape[:2] + (n, n)) if with_frame else None
    jac = None
    if with_jacobi:
        off = 2 * n + n * n
        jac = history[..., off : off + 4 * n * n].reshape(history.shape[:2] + (4, n, n))

    if rotation is not None:
        points = rotation.points_from_work(xs)
        vels = rotation.vectors_from_work(xs, vs[..., None])[..., 0]
        Es = rotation.vectors_from_work(xs, Es) if with_frame else None
    else:
        points, vels = xs, vs

    steps = np.arange(history.shape[0]) if record else np.array([0, max(n_steps, 1)])
    times = steps[:, None] * h[None, :]
    if not record and n_steps == 0:
        times = np.zeros((2, batch))
    return FlowResult(times, reduce_point(model, points), vels, Es, jac, status)


def raise_for_status(status: int, what: str) -> None:
    """Turn a per-row integration status into the matching exception."""
    if status == STATUS_CHART_EXIT:
        raise ChartExitError(f"{what}: trajectory reached the chart guard margin")
    if status == STATUS_NON_FINITE:
        raise IntegrationError(f"{what}: integrated state became non-finite")


def _step_count(length: float, step: float) -> int:
    return max(1, int(math.ceil(length / step - 1e-9)))


def _checked_base(model: ManifoldModel, v: TangentVector) -> np.ndarray:
    base = reduce_point(model, v.base)
    if base.shape != (model.dim,) or not in_domain(model, base):
        raise DomainError(f"Base point {v.base.tolist()} is outside the chart of {model.name}")
    return base


# ---------------------------------------------------------------------------
# Exponential map
# ---------------------------------------------------------------------------


def exp_map(
    model: ManifoldModel,
    v: TangentVector,
    t: float = 1.0,
    step: Optional[float] = None,
    analytic: bool = True,
) -> Tuple[np.ndarray, TangentVector]:
    """
    Endpoint exp_x(t v) and the final velocity of s -> exp_x(s v) at s = t.

    Args:
        model: Manifold model
        v: Initial velocity at x
        t: Time, t >= 0
        step: RK4 step in arc length; defaults to the ode_step setting
        analytic: Use the model's closed-form exponential when available

    Returns:
        Tuple of (endpoint, final velocity as a TangentVector at the endpoint)

    Raises:
        PreconditionError: If t < 0 or step <= 0
        ChartExitError: If the trajectory reaches the chart guard margin
        IntegrationError: If the state becomes non-finite

    Example:
        >>> torus = load_manifold("torus_2pi")
        >>> point, vel = exp_map(torus, TangentVector([0, 0], [1, 0]), np.pi / 2)
        >>> point
        array([1.57079633, 0.        ])
    """
    if t < 0:
        raise PreconditionError(f"Time must be non-negative, got {t}")
    step = float(get_setting("ode_step")) if step is None else float(step)
    if not step > 0:
        raise PreconditionError(f"Step must be positive, got {step}")

    base = _checked_base(model, v)
    comps = v.components
    if t == 0 or not np.any(comps):
        return base.copy(), TangentVector(base, comps.copy())

    if analytic and model.analytic_exp is not None:
        point, vel = model.analytic_exp(base, t * comps)
        point = reduce_point(model, np.asarray(point, dtype=float))
        return point, TangentVector(point, np.asarray(vel, dtype=float) / t)

    speed = norm(model, TangentVector(base, comps))
    flow = integrate_flow(model, base[None], comps[None], t, _step_count(t * speed, step))
    raise_for_status(int(flow.status[0]), "exp_map")
    point = flow.points[-1, 0]
    return point, TangentVector(point, flow.velocities[-1, 0])


def exp_batch(
    model: ManifoldModel,
    bases: np.ndarray,
    velocities: np.ndarray,
    t: float = 1.0,
    step: Optional[float] = None,
    analytic: bool = True,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorized exponential map over many initial data.

    Rows that exit the chart or blow up are reported in the mask instead of
    raising.

    Returns:
        Tuple of (points (B, n), final velocities (B, n), ok mask (B,))
    """
    bases = reduce_point(model, np.atleast_2d(np.asarray(bases, dtype=float)))
    velocities = np.atleast_2d(np.asarray(velocities, dtype=float))
    bases, velocities = np.broadcast_arrays(bases, velocities)
    bases, velocities = bases.copy(), velocities.copy()
    step = float(get_setting("ode_step")) if step is None else float(step)

    if analytic and model.analytic_exp is not None:
        points, vels = model.analytic_exp(bases, t * velocities)
        vels = np.asarray(vels) / t if t > 0 else velocities
        ok = np.all(np.isfinite(points), axis=1)
        return reduce_point(model, np.asarray(points)), vels, ok

    g = model.metric_eval(bases)
    speeds = np.sqrt(np.maximum(np.einsum("zi,zij,zj->z", velocities, g, velocities), 0.0))
    longest = float(t * np.max(speeds)) if len(speeds) else 0.0
    n_steps = _step_count(longest, step) if longest > 0 else 0
    flow = integrate_flow(model, bases, velocities, t, n_steps)
    ok = flow.status == STATUS_OK
    return flow.points[-1], flow.velocities[-1], ok


def integrate_geodesic(
    model: ManifoldModel,
    v: TangentVector,
    t_max: float,
    step: Optional[float] = None,
    with_frame: bool = True,
) -> GeodesicTrace:
    """
    Sample t -> exp_x(t v) on a uniform grid of [0, t_max].

    The grid has ceil(t_max |v| / step) intervals, so `step` is an arc-length
    step. With `with_frame` the parallel frame starting at e_1 = v/|v| is
    integrated alongside.
    """
    if t_max < 0:
        raise PreconditionError(f"t_max must be non-negative, got {t_max}")
    step = float(get_setting("ode_step")) if step is None else float(step)
    if not step > 0:
        raise PreconditionError(f"Step must be positive, got {step}")

    base = _checked_base(model, v)
    comps = v.components
    speed = norm(model, TangentVector(base, comps))
    n_steps = _step_count(t_max * speed, step) if t_max * speed > 0 else 1
    frames = initial_frames(model, base[None], comps[None]) if with_frame else None
    flow = integrate_flow(model, base[None], comps[None], t_max, n_steps, frames=frames, record=True)
    raise_for_status(int(flow.status[0]), "integrate_geodesic")
    return GeodesicTrace(
        initial=TangentVector(base, comps),
        grid=flow.times[:, 0],
        points=flow.points[:, 0],
        velocities=flow.velocities[:, 0],
        frame=flow.frames[:, 0] if with_frame else None,
    )


def parallel_frame(model: ManifoldModel, trace: GeodesicTrace) -> GeodesicTrace:
    """
    Populate the parallel orthonormal frame along a trace, e_1 = velocity/|velocity|.

    Raises:
        DegenerateInputError: If the trace has zero speed
    """
    comps = trace.initial.components
    if norm(model, trace.initial) <= 0:
        raise DegenerateInputError("Parallel frame needs a geodesic with nonzero speed")
    base = trace.initial.base
    n_steps = len(trace.grid) - 1
    frames = initial_frames(model, base[None], comps[None])
    flow = integrate_flow(
        model, base[None], comps[None], float(trace.grid[-1]), n_steps, frames=frames, record=True
    )
    raise_for_status(int(flow.status[0]), "parallel_frame")
    return GeodesicTrace(
        initial=trace.initial,
        grid=trace.grid,
        points=flow.points[:, 0],
        velocities=flow.velocities[:, 0],
        frame=flow.frames[:, 0],
    )


def export_trace_csv(trace: GeodesicTrace, path: Union[str, Path]) -> None:
    """
    Write a trace as CSV.

    Columns: t, x0..x{n-1}, v0..v{n-1}, then e{i}_{j} (component j of frame
    vector i) when the trace carries a frame.
    """
    n = trace.points.shape[1]
    header = ["t"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)]
    if trace.frame is not None:
        header += [f"e{i}_{j}" for i in range(n) for j in range(n)]

    rows = []
    for k, t in enumerate(trace.grid):
        row = [t, *trace.points[k], *trace.velocities[k]]
        if trace.frame is not None:
            row += list(trace.frame[k].T.reshape(-1))
        rows.append(row)
    write_csv(Path(path), header, rows)


# ---------------------------------------------------------------------------
# Distance
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _ShootingFan:
    directions: np.ndarray  # (D, n) unit chart vectors at x
    times: np.ndarray  # (K,)
    points: np.ndarray  # (K, D, n)
    valid_until: np.ndarray  # (D,) last valid grid index


# fans die with their model
_fan_cache: "weakref.WeakKeyDictionary[ManifoldModel, Dict[Tuple[bytes, int, float], _ShootingFan]]" = (
    weakref.WeakKeyDictionary()
)
_fan_lock = threading.Lock()


def clear_distance_cache() -> None:
    """Drop every cached shooting fan."""
    with _fan_lock:
        _fan_cache.clear()
    logger.info("Distance cache cleared")


def get_distance_cache_info() -> Dict[str, Any]:
    """
    Get information about the shooting-fan cache.

    Returns:
        Dict with the number of cached fans and their base points
    """
    with _fan_lock:
        keys = [key for fans in _fan_cache.values() for key in fans]
        return {
            "models": len(_fan_cache),
            "entries": len(keys),
            "bases": [np.frombuffer(key[0]).tolist() for key in keys],
            "directions": sorted({key[1] for key in keys}),
        }


def _unit_directions(model: ManifoldModel, x: np.ndarray, count: int) -> np.ndarray:
    frame = frame_at(model, x)
    n = model.dim
    if n == 2:
        ang = angle_grid(count)
        coords = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        coords = np.random.default_rng(0).standard_normal((count, n))
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
    return coords @ frame.T


def _shooting_fan(model: ManifoldModel, x: np.ndarray, count: int, step: float) -> _ShootingFan:
    key = (x.tobytes(), count, step)
    with _fan_lock:
        fan = _fan_cache.get(model, {}).get(key)
    if fan is not None:
        return fan

    dirs = _unit_directions(model, x, count)
    t_max = model.diameter_bound
    n_steps = _step_count(t_max, step)
    flow = integrate_flow(model, np.repeat(x[None], count, axis=0), dirs, t_max, n_steps, record=True)

    valid = np.full(count, n_steps, dtype=int)
    frozen = flow.status != STATUS_OK
    if frozen.any():
        moved = np.any(flow.points[1:, frozen] != flow.points[:-1, frozen], axis=-1)
        last = np.where(moved.any(axis=0), n_steps - np.argmax(moved[::-1], axis=0), 0)
        valid[frozen] = last

    fan = _ShootingFan(dirs, flow.times[:, 0], flow.points, valid)
    with _fan_lock:
        _fan_cache.setdefault(model, {})[key] = fan
    logger.info(
        f"Cached shooting fan for {model.name} at {x.tolist()} "
        f"({count} directions, {n_steps} steps, {int(frozen.sum())} left the chart)"
    )
    return fan


def _fan_candidates(model: ManifoldModel, fan: _ShootingFan, y: np.ndarray) -> np.ndarray:
    """Seed velocities at local minima of the chart gap over (time, direction)."""
    gap = np.linalg.norm(chart_difference(model, fan.points, y), axis=-1)  # (K, D)
    K, D = gap.shape
    index = np.arange(K)[:, None]
    gap = np.where(index <= fan.valid_until[None, :], gap, np.inf)

    padded = np.pad(gap, ((1, 1), (0, 0)), constant_values=np.inf)
    is_min = (gap <= padded[:-2]) & (gap <= padded[2:]) & np.isfinite(gap)
    if model.dim == 2:
        is_min &= (gap <= np.roll(gap, 1, axis=1)) & (gap <= np.roll(gap, -1, axis=1))
    ks, ds = np.nonzero(is_min)
    if len(ks) == 0:
        ks, ds = np.unravel_index(np.argsort(gap, axis=None)[:MAX_CANDIDATES], gap.shape)
    order = np.argsort(gap[ks, ds], kind="stable")[:MAX_CANDIDATES]
    ks, ds = ks[order], ds[order]
    return fan.times[ks, None] * fan.directions[ds]


def _endpoint_residual(
    model: ManifoldModel, x: np.ndarray, w: np.ndarray, y: np.ndarray, step: float
) -> Tuple[np.ndarray, np.ndarray]:
    points, _, ok = exp_batch(model, np.broadcast_to(x, w.shape), w, 1.0, step, analytic=False)
    res = chart_difference(model, y, points)
    res[~ok] = np.inf
    return res, ok


def _newton_refine(
    model: ManifoldModel,
    x: np.ndarray,
    y: np.ndarray,
    seeds: np.ndarray,
    step: float,
    tol: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Batched damped Newton on F(w) = exp_x(w) - y with a finite-difference Jacobian."""
    n = model.dim
    w = seeds.copy()
    F, _ = _endpoint_residual(model, x, w, y, step)
    res = np.linalg.norm(F, axis=1)
    active = np.isfinite(res) & (res > tol)

    for it in range(NEWTON_MAX_ITER):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        wa = w[idx]
        eps = JACOBIAN_STEP * np.maximum(1.0, np.linalg.norm(wa, axis=1))
        probes = wa[:, None, :] + eps[:, None, None] * np.eye(n)[None]
        Fp, okp = _endpoint_residual(model, x, probes.reshape(-1, n), y, step)
        Fp = Fp.reshape(len(idx), n, n)
        jac = np.swapaxes((Fp - F[idx][:, None, :]) / eps[:, None, None], 1, 2)

        bad = ~np.all(np.isfinite(jac), axis=(1, 2)) | (np.abs(np.linalg.det(jac)) < 1e-14)
        delta = np.zeros_like(wa)
        good = ~bad
        if good.any():
            delta[good] = -np.linalg.solve(jac[good], F[idx][good][..., None])[..., 0]

        lam = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        for _ in range(LINE_SEARCH_HALVINGS):
            pending = good & ~accepted
            if not pending.any():
                break
            trial = wa[pending] + lam[pending, None] * delta[pending]
            Ft, _ = _endpoint_residual(model, x, trial, y, step)
            rt = np.linalg.norm(Ft, axis=1)
            better = rt < res[idx][pending]
            rows = np.flatnonzero(pending)
            take = rows[better]
            w[idx[take]] = trial[better]
            F[idx[take]] = Ft[better]
            res[idx[take]] = rt[better]
            accepted[take] = True
            lam[rows[~better]] *= 0.5

        stalled = ~accepted
        active[idx[stalled]] = False
        active &= res > tol
        logger.debug(f"Newton iteration {it}: {int(active.sum())} candidates still active")

    return w, res


def distance(
    model: ManifoldModel,
    x: Any,
    y: Any,
    opts: Optional[DistanceOptions] = None,
) -> DistanceResult:
    """
    Geodesic distance d(x, y) and all near-minimizing initial velocities.

    Closed-form models answer directly. Otherwise unit-speed geodesics from x
    are shot over a direction grid up to the diameter bound; local minima of
    the endpoint gap seed a batched damped Newton solve of exp_x(w) = y, and
    every converged velocity within `length_gap` of the shortest one is
    reported as a minimizer.

    Args:
        model: Manifold model
        x: Chart point
        y: Chart point
        opts: DistanceOptions (n_directions, step, refine_step, refine_tol,
            hints, length_gap, endpoint_gap)

    Returns:
        DistanceResult; converged is False when no candidate reached the
        endpoint tolerance, in which case value is the best length found

    Raises:
        DomainError: If x or y lies outside the chart
    """
    opts = opts or {}
    xp = reduce_point(model, np.asarray(x, dtype=float).reshape(-1))
    yp = reduce_point(model, np.asarray(y, dtype=float).reshape(-1))
    for name, p in (("x", xp), ("y", yp)):
        if not in_domain(model, p):
            raise DomainError(f"Point {name}={p.tolist()} is outside the chart of {model.name}")

    length_gap = float(opts.get("length_gap", 1e-5))
    endpoint_gap = float(opts.get("endpoint_gap", 1e-6))
    cap = int(get_setting("multiplicity_cap"))

    if model.analytic_dist is not None:
        value = float(model.analytic_dist(xp, yp))
        if model.analytic_log is not None:
            vels = model.analytic_log(xp, yp, gap=length_gap, cap=cap)
        else:
            vels = [chart_difference(model, xp, yp)]
        mins = tuple(TangentVector(xp, w) for w in vels)
        return DistanceResult(value, mins[0], len(mins), True, mins, 0.0)

    n_dir = int(opts.get("n_directions", get_setting("shooting_directions")))
    step = float(opts.get("step", get_setting("shooting_step")))
    refine_step = float(opts.get("refine_step", step))
    tol = float(opts.get("refine_tol", NEWTON_RESIDUAL))

    fan = _shooting_fan(model, xp, n_dir, step)
    seeds = _fan_candidates(model, fan, yp)
    hints = [
        np.asarray(h.components if isinstance(h, TangentVector) else h, dtype=float).reshape(-1)
        for h in opts.get("hints", [])
    ]
    if hints:
        seeds = np.concatenate([np.stack(hints), seeds], axis=0)

    w, res = _newton_refine(model, xp, yp, seeds, refine_step, tol)
    g = metric_at(model, xp)
    lengths = np.sqrt(np.maximum(np.einsum("zi,ij,zj->z", w, g, w), 0.0))
    converged = res <= max(tol, endpoint_gap)

    if not converged.any():
        best = int(np.nanargmin(np.where(np.isfinite(res), res, np.nan))) if np.isfinite(res).any() else 0
        logger.warning(
            f"Distance refinement did not converge on {model.name} "
            f"(best residual {float(res[best]):.3e})"
        )
        vel = TangentVector(xp, w[best])
        return DistanceResult(float(lengths[best]), vel, 0, False, (vel,), float(res[best]))

    shortest = float(np.min(lengths[converged]))
    pick = np.flatnonzero(converged & (lengths <= shortest + length_gap))
    pick = pick[np.argsort(lengths[pick], kind="stable")]
    kept: List[np.ndarray] = []
    for i in pick:
        if all(np.linalg.norm(w[i] - k) > DEDUP_TOL for k in kept):
            kept.append(w[i])
        if len(kept) >= cap:
            break

    mins = tuple(TangentVector(xp, k) for k in kept)
    return DistanceResult(
        value=shortest,
        minimizer_velocity=mins[0],
        multiplicity=len(mins),
        converged=True,
        minimizers=mins,
        residual=float(np.max(res[pick])),
    )
