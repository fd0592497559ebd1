"""
Matrix Jacobi fields, focal times and the symplectic structure of the Jacobi flow.

Along t -> exp_x(t v) the fundamental solutions J01 and J10 of J'' + R J = 0,
with (J, J') = (Id, 0) and (0, Id) at t = 0, are integrated in the parallel
frame. Focal times are the first singularities of J10; Lagrangian subspaces
L_t = {(h, q) : J01(t) h + J10(t) q = 0} are represented as symmetric graphs
over a splitting chosen from the kernel of J01 at the focal time.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import brentq, minimize_scalar

from ..config import get_setting
from ..errors import (
    DegenerateInputError,
    PreconditionError,
    ResolutionError,
    SplittingError,
)
from ..geodesic import (
    GeodesicTrace,
    exp_batch,
    identity_jacobi,
    initial_frames,
    integrate_flow,
    raise_for_status,
)
from ..manifold import (
    ManifoldModel,
    TangentVector,
    chart_difference,
    curvature_operator,
    in_domain,
    reduce_point,
)
from ..types import FocalReportDict, LipschitzProbeReport
from ..utils import write_csv

logger = logging.getLogger(__name__)

# Constants
HORIZON_FACTOR = 4.0
FOCAL_TOL = 1e-6
BRENT_XTOL = 1e-10
DIP_FACTOR = 10.0
DOUBLE_ROOT_TOL = 1e-5
SPLITTING_TOL = 1e-6
GRAPH_COND_TOL = 1e-10
FD_EXP_STEP = 1e-4


@dataclass(frozen=True, eq=False)
class FundamentalSolutions:
    """J01, J10 and their derivatives on the grid of a geodesic trace, in its parallel frame."""

    model: ManifoldModel
    trace: GeodesicTrace
    R_samples: np.ndarray
    J01: np.ndarray
    J01dot: np.ndarray
    J10: np.ndarray
    J10dot: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        return self.trace.grid

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def blocks(self, k: int) -> np.ndarray:
        return np.stack([self.J01[k], self.J01dot[k], self.J10[k], self.J10dot[k]])

    def symplectic_matrix(self, k: int) -> np.ndarray:
        return np.block([[self.J01[k], self.J10[k]], [self.J01dot[k], self.J10dot[k]]])


@dataclass(frozen=True, eq=False)
class FocalReport:
    """First focal time along a geodesic and the direction that focuses."""

    t_f: float
    focal_direction: Optional[np.ndarray]
    min_singular_trace: np.ndarray
    bisection_width: float
    multiplicity: int = 0
    min_singular_value: float = math.nan

    @property
    def finite(self) -> bool:
        return math.isfinite(self.t_f)

    def to_dict(self) -> FocalReportDict:
        return {
            "t_f": self.t_f,
            "focal_direction": None
            if self.focal_direction is None
            else self.focal_direction.tolist(),
            "multiplicity": self.multiplicity,
            "bisection_width": self.bisection_width,
            "min_singular_value": self.min_singular_value,
        }


@dataclass(frozen=True)
class Splitting:
    """Orthonormal basis U of the frame and the number of kernel directions (last columns)."""

    basis: np.ndarray
    kernel_count: int = 0


@dataclass(frozen=True, eq=False)
class LagrangianGraph:
    """L_t written as {(S w, w)} in the rotated coordinates of a splitting."""

    t: float
    splitting_index: int
    S: np.ndarray
    asymmetry: float
    splitting: Splitting


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


def _speed(model: ManifoldModel, x: np.ndarray, v: np.ndarray) -> float:
    g = model.metric_eval(x)
    return math.sqrt(max(float(v @ g @ v), 0.0))


def fundamental_batch(
    model: ManifoldModel,
    bases: np.ndarray,
    velocities: np.ndarray,
    t_max: float,
    step: Optional[float] = None,
) -> List[FundamentalSolutions]:
    """
    Fundamental solutions for many geodesics on one shared time grid.

    Rows whose integration fails raise; callers batch only data they expect
    to stay in the chart.
    """
    step = float(get_setting("ode_step")) if step is None else float(step)
    bases = reduce_point(model, np.atleast_2d(np.asarray(bases, dtype=float)))
    velocities = np.atleast_2d(np.asarray(velocities, dtype=float))
    batch, n = bases.shape
    speeds = [_speed(model, bases[b], velocities[b]) for b in range(batch)]
    if min(speeds) <= 0:
        raise DegenerateInputError("Jacobi fields need a geodesic with nonzero speed")

    n_steps = max(1, int(math.ceil(t_max * max(speeds) / step - 1e-9)))
    frames = initial_frames(model, bases, velocities)
    flow = integrate_flow(
        model,
        bases,
        velocities,
        t_max,
        n_steps,
        frames=frames,
        jacobi_state=identity_jacobi(batch, n),
        record=True,
    )
    for b in range(batch):
        raise_for_status(int(flow.status[b]), "integrate_fundamental")

    K = flow.points.shape[0]
    R = curvature_operator(
        model,
        flow.points.reshape(-1, n),
        flow.velocities.reshape(-1, n),
        flow.frames.reshape(-1, n, n),
    ).reshape(K, batch, n, n)

    out = []
    for b in range(batch):
        trace = GeodesicTrace(
            initial=TangentVector(bases[b], velocities[b]),
            grid=flow.times[:, b],
            points=flow.points[:, b],
            velocities=flow.velocities[:, b],
            frame=flow.frames[:, b],
        )
        jac = flow.jacobi[:, b]
        out.append(
            FundamentalSolutions(
                model, trace, R[:, b], jac[:, 0], jac[:, 1], jac[:, 2], jac[:, 3]
            )
        )
    return out


def default_horizon(model: ManifoldModel, speed: float) -> float:
    """Time horizon of focal searches: HORIZON_FACTOR diameters of arc length."""
    return HORIZON_FACTOR * model.diameter_bound / speed


def integrate_fundamental(
    model: ManifoldModel,
    v: TangentVector,
    t_max: Optional[float] = None,
    step: Optional[float] = None,
) -> FundamentalSolutions:
    """
    Integrate J01, J10 and the curvature operator along t -> exp_x(t v).

    Args:
        model: Manifold model
        v: Initial velocity, |v| > 0
        t_max: Final time; defaults to the horizon 4 diameter_bound / |v|
        step: Arc-length step; defaults to the ode_step setting

    Returns:
        FundamentalSolutions on a uniform grid of [0, t_max]

    Raises:
        DegenerateInputError: If |v| = 0
        PreconditionError: If t_max exceeds the horizon
        ChartExitError: If the geodesic reaches the chart guard margin

    Example:
        >>> sol = integrate_fundamental(load_manifold("torus_2pi"), TangentVector([0, 0], [1, 0]), 2.0)
        >>> np.allclose(sol.J10[-1], 2.0 * np.eye(2))
        True
    """
    base = reduce_point(model, v.base)
    if not in_domain(model, base):
        raise PreconditionError(f"Base point {v.base.tolist()} is outside the chart")
    speed = _speed(model, base, v.components)
    if speed <= 0:
        raise DegenerateInputError("Jacobi fields need a geodesic with nonzero speed")
    horizon = default_horizon(model, speed)
    if t_max is None:
        t_max = horizon
    if not 0 < t_max <= horizon * (1 + 1e-12):
        raise PreconditionError(f"t_max={t_max} must lie in (0, {horizon:.6g}]")
    return fundamental_batch(model, base[None], v.components[None], t_max, step)[0]


def grid_index(solutions: FundamentalSolutions, t: float) -> int:
    """Index of the grid time nearest to t."""
    grid = solutions.grid
    dt = solutions.dt
    k = int(round(t / dt))
    if k < 0 or k >= len(grid) or abs(grid[k] - t) > 0.5 * dt + 1e-12:
        raise PreconditionError(f"t={t} is outside the grid [0, {grid[-1]:.6g}]")
    return k


def _advance(solutions: FundamentalSolutions, k: int, tau: float) -> np.ndarray:
    """Re-integrate the Jacobi blocks from grid index k over time tau."""
    if tau <= 0:
        return solutions.blocks(k)
    trace = solutions.trace
    n_steps = max(1, int(math.ceil(tau / solutions.dt - 1e-9)))
    flow = integrate_flow(
        solutions.model,
        trace.points[k][None],
        trace.velocities[k][None],
        tau,
        n_steps,
        frames=trace.frame[k][None],
        jacobi_state=solutions.blocks(k)[None],
    )
    raise_for_status(int(flow.status[0]), "focal refinement")
    return flow.jacobi[-1, 0]


# ---------------------------------------------------------------------------
# Focal times
# ---------------------------------------------------------------------------


def _signed_min_singular(J: np.ndarray) -> float:
    sigma = np.linalg.svd(J, compute_uv=False)
    return float(np.sign(np.linalg.det(J)) * sigma[-1])


def _normalize_sign(vec: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(vec)))
    return vec if vec[i] >= 0 else -vec


def _focal_report(
    J: np.ndarray, t_f: float, trace_sigma: np.ndarray, width: float, tol: float
) -> FocalReport:
    _, sigma, vt = np.linalg.svd(J)
    return FocalReport(
        t_f=t_f,
        focal_direction=_normalize_sign(vt[-1]),
        min_singular_trace=trace_sigma,
        bisection_width=width,
        multiplicity=int(np.sum(sigma <= max(tol, 10 * sigma[-1]))),
        min_singular_value=float(sigma[-1]),
    )


def focal_time(solutions: FundamentalSolutions, tol: float = FOCAL_TOL) -> FocalReport:
    """
    First time at which J10 becomes singular.

    Sign changes of det(J10) are refined with Brent's method by re-integrating
    from the last grid state before the change. Dips of the smallest singular
    value without a sign change are minimized; a dip reaching zero is a focal
    time only if a second singular value vanishes with it.

    Returns:
        FocalReport; t_f is +inf when J10 stays nonsingular up to the horizon

    Raises:
        ResolutionError: If a zero of the smallest singular value is not
            bracketed by a sign change (two crossings in one grid cell)
    """
    J10 = solutions.J10
    K = len(J10)
    sigma = np.linalg.svd(J10, compute_uv=False)
    smin = sigma[:, -1]
    signed = np.sign(np.linalg.det(J10)) * smin
    dt = solutions.dt
    dip_level = DIP_FACTOR * dt

    for k in range(2, K):
        if signed[k - 1] > 0 and signed[k] <= 0:
            def f(tau: float) -> float:
                return _signed_min_singular(_advance(solutions, k - 1, tau)[2])

            tau = brentq(f, 0.0, dt, xtol=BRENT_XTOL) if signed[k] < 0 else dt
            t_f = float(solutions.grid[k - 1] + tau)
            J = _advance(solutions, k - 1, tau)[2]
            logger.debug(f"Focal sign change in cell {k}, t_f={t_f:.10f}")
            return _focal_report(J, t_f, smin, BRENT_XTOL, tol)

        is_dip = k + 1 < K and smin[k] < dip_level and smin[k] <= smin[k - 1] and smin[k] <= smin[k + 1]
        if not is_dip:
            continue

        res = minimize_scalar(
            lambda tau: float(np.linalg.svd(_advance(solutions, k - 1, tau)[2], compute_uv=False)[-1]),
            bounds=(0.0, 2.0 * dt),
            method="bounded",
            options={"xatol": BRENT_XTOL},
        )
        if res.fun > tol:
            continue
        J = _advance(solutions, k - 1, float(res.x))[2]
        sv = np.linalg.svd(J, compute_uv=False)
        if len(sv) > 1 and sv[-2] <= DOUBLE_ROOT_TOL:
            return _focal_report(J, float(solutions.grid[k - 1] + res.x), smin, BRENT_XTOL, tol)
        raise ResolutionError(
            f"Smallest singular value of J10 touches zero near t={solutions.grid[k]:.6g} "
            "without a sign change; integrate with a smaller step"
        )

    return FocalReport(math.inf, None, smin, 0.0, 0, float(smin[-1]))


def focal_times_batch(
    model: ManifoldModel,
    bases: np.ndarray,
    unit_velocities: np.ndarray,
    t_max: Optional[float] = None,
    step: Optional[float] = None,
) -> List[FocalReport]:
    """First focal times (arc length) for many unit-speed geodesics at once."""
    t_max = HORIZON_FACTOR * model.diameter_bound if t_max is None else t_max
    return [focal_time(sol) for sol in fundamental_batch(model, bases, unit_velocities, t_max, step)]


# ---------------------------------------------------------------------------
# Consistency checks
# ---------------------------------------------------------------------------


def verify_jacobi_vs_exp(
    model: ManifoldModel,
    solutions: FundamentalSolutions,
    h: Sequence[float],
    t: float,
    fd_step: float = FD_EXP_STEP,
) -> float:
    """
    Compare J10(t) h with a centered difference of s -> exp_x(t (v + s E0 h)).

    h is given in frame coordinates. The time is snapped to the grid.

    Returns:
        Euclidean residual in frame coordinates at exp_x(t v)

    Raises:
        PreconditionError: If t is outside the grid or zero
        ChartExitError: If the stencil geodesics cannot be integrated
    """
    k = grid_index(solutions, t)
    t_k = float(solutions.grid[k])
    if t_k <= 0:
        raise PreconditionError("verify_jacobi_vs_exp needs t > 0")
    h = np.asarray(h, dtype=float)
    trace = solutions.trace
    x = trace.initial.base
    v = trace.initial.components
    dv = trace.frame[0] @ h

    starts = np.stack([v + fd_step * dv, v - fd_step * dv])
    points, _, ok = exp_batch(model, np.stack([x, x]), starts, t_k)
    if not ok.all():
        raise_for_status(1, "verify_jacobi_vs_exp stencil")
    D = chart_difference(model, points[1], points[0]) / (2.0 * fd_step)

    y = trace.points[k]
    E = trace.frame[k]
    fd_frame = E.T @ model.metric_eval(y) @ D
    return float(np.linalg.norm(solutions.J10[k] @ h - fd_frame))


_SYMPLECTIC_J: Dict[int, np.ndarray] = {}


def _symplectic_unit(n: int) -> np.ndarray:
    if n not in _SYMPLECTIC_J:
        eye = np.eye(n)
        zero = np.zeros((n, n))
        _SYMPLECTIC_J[n] = np.block([[zero, eye], [-eye, zero]])
    return _SYMPLECTIC_J[n]


def symplectic_defect(solutions: FundamentalSolutions, t: float) -> float:
    """Max-abs norm of M(t)^T J M(t) - J."""
    k = grid_index(solutions, t)
    M = solutions.symplectic_matrix(k)
    Jm = _symplectic_unit(M.shape[0] // 2)
    return float(np.max(np.abs(M.T @ Jm @ M - Jm)))


def max_symplectic_defect(solutions: FundamentalSolutions) -> float:
    """Largest symplectic defect over the whole grid."""
    n = solutions.J01.shape[1]
    M = np.concatenate(
        [
            np.concatenate([solutions.J01, solutions.J10], axis=2),
            np.concatenate([solutions.J01dot, solutions.J10dot], axis=2),
        ],
        axis=1,
    )
    Jm = _symplectic_unit(n)
    return float(np.max(np.abs(np.swapaxes(M, 1, 2) @ Jm @ M - Jm)))


def jacobi_field(solutions: FundamentalSolutions, h: Sequence[float], q: Sequence[float]) -> np.ndarray:
    """J(t) = J01(t) h + J10(t) q on the grid, in frame coordinates."""
    h = np.asarray(h, dtype=float)
    q = np.asarray(q, dtype=float)
    return solutions.J01 @ h + solutions.J10 @ q


def reconstruction_residual(
    model: ManifoldModel,
    v: TangentVector,
    h: Sequence[float],
    q: Sequence[float],
    t_max: float,
    step: Optional[float] = None,
) -> float:
    """
    Integrate the single Jacobi field with J(0) = h, J'(0) = q and compare it
    with J01 h + J10 q on the same grid.
    """
    solutions = integrate_fundamental(model, v, t_max, step)
    n = model.dim
    state = np.zeros((1, 4, n, n))
    state[0, 0, :, 0] = h
    state[0, 1, :, 0] = q
    trace = solutions.trace
    flow = integrate_flow(
        model,
        trace.initial.base[None],
        trace.initial.components[None],
        float(trace.grid[-1]),
        len(trace.grid) - 1,
        frames=trace.frame[0][None],
        jacobi_state=state,
        record=True,
    )
    raise_for_status(int(flow.status[0]), "reconstruction_residual")
    direct = flow.jacobi[:, 0, 0, :, 0]
    return float(np.max(np.abs(direct - jacobi_field(solutions, h, q))))


# ---------------------------------------------------------------------------
# Lagrangian graphs
# ---------------------------------------------------------------------------


def focal_splitting(
    solutions: FundamentalSolutions, report: Optional[FocalReport] = None
) -> Splitting:
    """
    Splitting from the singular directions of J01 at the focal time.

    Directions with singular value below SPLITTING_TOL form the kernel block;
    without a finite focal time the frame basis is used unchanged.
    """
    report = report if report is not None else focal_time(solutions)
    n = solutions.J01.shape[1]
    if not report.finite:
        return Splitting(np.eye(n), 0)
    k = min(grid_index(solutions, report.t_f), len(solutions.grid) - 1)
    tau = report.t_f - float(solutions.grid[k])
    if tau < 0:
        k -= 1
        tau = report.t_f - float(solutions.grid[k])
    A = _advance(solutions, k, tau)[0]
    _, sigma, vt = np.linalg.svd(A)
    kernel = int(np.sum(sigma < SPLITTING_TOL))
    return Splitting(vt.T, kernel)


def _graph_from_blocks(A: np.ndarray, B: np.ndarray, splitting: Splitting) -> Tuple[np.ndarray, float]:
    n = A.shape[0]
    basis = null_space(np.hstack([A, B]))
    if basis.shape[1] != n:
        raise SplittingError(f"Lagrangian subspace has dimension {basis.shape[1]}, expected {n}")
    U = splitting.basis
    m = n - splitting.kernel_count
    h = U.T @ basis[:n]
    q = U.T @ basis[n:]
    Z = np.vstack([h[:m], q[m:]])
    W = np.vstack([q[:m], -h[m:]])
    sv = np.linalg.svd(W, compute_uv=False)
    if sv[-1] <= GRAPH_COND_TOL * max(sv[0], 1.0):
        raise SplittingError("Lagrangian subspace is not a graph over the chosen splitting")
    S = Z @ np.linalg.inv(W)
    asym = float(np.max(np.abs(S - S.T)))
    return 0.5 * (S + S.T), asym


def lagrangian_graph(
    solutions: FundamentalSolutions,
    t: float,
    splitting: Optional[Splitting] = None,
) -> LagrangianGraph:
    """
    Represent L_t = {(h, q) : J01(t) h + J10(t) q = 0} as a symmetric graph.

    In the rotated coordinates h~ = U^T h, q~ = U^T q of the splitting, with
    N the regular and K the kernel directions, L_t = {(z, w)} for
    z = (h~_N, q~_K), w = (q~_N, -h~_K), and z = S w.

    Raises:
        SplittingError: If L_t is not a graph over the splitting
    """
    k = grid_index(solutions, t)
    splitting = splitting or focal_splitting(solutions)
    S, asym = _graph_from_blocks(solutions.J01[k], solutions.J10[k], splitting)
    return LagrangianGraph(float(solutions.grid[k]), splitting.kernel_count, S, asym, splitting)


def sdot_probe(
    solutions: FundamentalSolutions,
    t: float,
    w: Sequence[float],
    splitting: Optional[Splitting] = None,
) -> Tuple[float, float]:
    """
    Centered difference of <S(t) w, w> against -|J'(t)|^2 for the matching Jacobi field.

    Returns:
        Tuple of (lhs, rhs)

    Raises:
        PreconditionError: If t has no grid neighbours on both sides
        SplittingError: If the graph representation fails near t
    """
    k = grid_index(solutions, t)
    if k < 1 or k + 1 >= len(solutions.grid):
        raise PreconditionError("sdot_probe needs grid points on both sides of t")
    splitting = splitting or focal_splitting(solutions)
    w = np.asarray(w, dtype=float)

    S_minus, _ = _graph_from_blocks(solutions.J01[k - 1], solutions.J10[k - 1], splitting)
    S_plus, _ = _graph_from_blocks(solutions.J01[k + 1], solutions.J10[k + 1], splitting)
    S_mid, _ = _graph_from_blocks(solutions.J01[k], solutions.J10[k], splitting)
    lhs = float(w @ ((S_plus - S_minus) / (2.0 * solutions.dt)) @ w)

    m = len(w) - splitting.kernel_count
    z = S_mid @ w
    h_rot = np.concatenate([z[:m], -w[m:]])
    q_rot = np.concatenate([w[:m], z[m:]])
    U = splitting.basis
    h, q = U @ h_rot, U @ q_rot
    jdot = solutions.J01dot[k] @ h + solutions.J10dot[k] @ q
    return lhs, -float(jdot @ jdot)


def sdot_minimum(
    model: ManifoldModel,
    x: Sequence[float],
    directions: Sequence[Sequence[float]],
    step: Optional[float] = None,
) -> Dict[str, Any]:
    """
    Smallest |<S'(t_f) q, q>| over the focal directions of the given unit directions.

    Returns:
        Dict with the minimum (+inf when no direction focuses), per-direction
        values and the number of non-focal directions
    """
    x = np.asarray(x, dtype=float)
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    values: List[float] = []
    non_focal = 0
    bases = np.repeat(x[None], len(dirs), axis=0)
    sols = fundamental_batch(model, bases, dirs, HORIZON_FACTOR * model.diameter_bound, step)
    for sol in sols:
        report = focal_time(sol)
        if not report.finite:
            non_focal += 1
            values.append(math.inf)
            continue
        splitting = focal_splitting(sol, report)
        k = min(max(grid_index(sol, report.t_f), 1), len(sol.grid) - 2)
        q = splitting.basis.T @ report.focal_direction
        lhs, _ = sdot_probe(sol, float(sol.grid[k]), q, splitting)
        values.append(abs(lhs))
    finite = [v for v in values if math.isfinite(v)]
    return {
        "min": min(finite) if finite else math.inf,
        "values": values,
        "non_focal": non_focal,
    }


# ---------------------------------------------------------------------------
# Lipschitz probe of the focal time
# ---------------------------------------------------------------------------


def _unit(model: ManifoldModel, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    return v / _speed(model, x, v)


def focal_lipschitz_probe(
    model: ManifoldModel,
    v: TangentVector,
    directions: Optional[Sequence[Sequence[float]]] = None,
    epsilons: Sequence[float] = (1e-2, 1e-3),
    step: Optional[float] = None,
    t_max: Optional[float] = None,
) -> LipschitzProbeReport:
    """
    Difference quotients of the unit-speed focal time t_f(x, v) on TM.

    Each perturbation moves (x, v) by +-eps along one direction of the
    2n-dimensional (x, v) coordinate space (or the given directions), with v
    renormalized to unit length. First quotients bound the Lipschitz
    constant; the upper and lower second quotients probe semiconcavity.
    Perturbations whose focal time runs past the horizon are skipped and the
    report is marked incomplete.
    """
    n = model.dim
    x = reduce_point(model, v.base)
    e = _unit(model, x, v.components)
    dirs = np.eye(2 * n) if directions is None else np.atleast_2d(np.asarray(directions, dtype=float))

    bases = [x]
    vels = [e]
    for eps in epsilons:
        for d in dirs:
            for sign in (1.0, -1.0):
                xp = reduce_point(model, x + sign * eps * d[:n])
                bases.append(xp)
                vels.append(_unit(model, xp, e + sign * eps * d[n:]))

    reports = focal_times_batch(model, np.stack(bases), np.stack(vels), t_max=t_max, step=step)
    t0 = reports[0].t_f
    if not math.isfinite(t0):
        raise PreconditionError("Focal time of the probed direction is beyond the horizon")

    quotients: List[float] = []
    uppers: List[float] = []
    lowers: List[float] = []
    incomplete = False
    skipped = 0
    i = 1
    for eps in epsilons:
        first: List[float] = []
        second: List[float] = []
        for _ in dirs:
            tp, tm = reports[i].t_f, reports[i + 1].t_f
            i += 2
            if not (math.isfinite(tp) and math.isfinite(tm)):
                incomplete = True
                skipped += 1
                continue
            first.append(max(abs(tp - t0), abs(tm - t0)) / eps)
            second.append((tp + tm - 2.0 * t0) / eps**2)
        quotients.append(max(first) if first else math.nan)
        uppers.append(max(second) if second else math.nan)
        lowers.append(min(second) if second else math.nan)

    if incomplete:
        logger.warning(f"Focal Lipschitz probe incomplete: {skipped} perturbations reached the horizon")

    return {
        "mode": "focal",
        "epsilons": list(epsilons),
        "quotients": quotients,
        "max_quotient": max((q for q in quotients if not math.isnan(q)), default=math.nan),
        "stable": quotients_stable(quotients),
        "incomplete": incomplete,
        "second_upper": uppers,
        "second_lower": lowers,
        "skipped": skipped,
    }


def quotients_stable(quotients: Sequence[float], floor: float = 1e-4) -> bool:
    """Consecutive quotients agree within a factor of 2 (or are both below floor)."""
    finite = [q for q in quotients if math.isfinite(q)]
    if len(finite) < len(quotients) or not finite:
        return False
    for a, b in zip(finite, finite[1:]):
        if max(a, b) <= floor:
            continue
        if min(a, b) <= 0 or max(a, b) / min(a, b) > 2.0:
            return False
    return True


def export_solutions_csv(solutions: FundamentalSolutions, path: Union[str, Path]) -> None:
    """Write t, vec(J01), vec(J10), vec(J01dot), vec(J10dot) (row-major) as CSV."""
    n = solutions.J01.shape[1]
    names = ("J01", "J10", "J01dot", "J10dot")
    header = ["t"] + [f"{name}_{i}{j}" for name in names for i in range(n) for j in range(n)]
    mats = (solutions.J01, solutions.J10, solutions.J01dot, solutions.J10dot)
    rows = [
        [t] + [float(val) for m in mats for val in m[k].reshape(-1)]
        for k, t in enumerate(solutions.grid)
    ]
    write_csv(Path(path), header, rows)
