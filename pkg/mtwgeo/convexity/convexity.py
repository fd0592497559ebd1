"""
Segment functions h(t), differential inequalities and convexity of domains.

For v0, v1 in I(x) the segment v_t = (1 - t) v0 + t v1 defines
h(t) = |v_t|^2 / 2 - d(x, exp_x v_t)^2 / 2 >= 0, which vanishes identically
when the segment stays in I(x). Its derivatives are tied to the extended MTW
tensor, and the inequalities it satisfies bound how far the segment can leave
I(x). The domain tests measure (radial/distance) semiconvexity and uniform
convexity of sampled injectivity domains.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import get_setting
from ..cutlocus import DomainSample, cut_time, radial_distance_to_domain
from ..errors import (
    GeometryError,
    HypothesisError,
    KinkError,
    PreconditionError,
)
from ..geodesic import distance, exp_batch
from ..manifold import ManifoldModel, TangentVector, chart_difference, frame_at, metric_at, reduce_point
from ..mtw import extended_mtw_tensor, make_extended_cost_context
from ..types import DiffIneqReport, LipcontrolReport, SemiconvexityReportDict
from ..utils import rk4_integrate, write_csv

logger = logging.getLogger(__name__)

# Constants
MIN_SEGMENT_SAMPLES = 32
KINK_FACTOR = 50.0
KINK_WINDOW = 5
KINK_FLOOR = 1e-10
KINK_PLATEAU = 3
PERTURB_SIZE = 1e-4
PERTURB_RETRIES = 5
YDOT_STEP = 1e-5
H_TOL = 1e-8
CHECK_TOL = 1e-6
HYP_REL_FLOOR = 1e-9
EPS = float(np.finfo(float).eps)
CHORD_TIMES = 15
MAX_CHORD_POINTS = 72
BOUNDARY_DENSITY = 8
LEMMAS = ("lemineq", "lemineqbis", "lemineqbism")


# ---------------------------------------------------------------------------
# Segment traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SegmentTrace:
    """Samples of v_t, y_t, q_t, q-bar_t and h(t) along a segment in T_xM."""

    model: ManifoldModel
    x: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    t: np.ndarray
    v: np.ndarray
    y: np.ndarray
    ydot: np.ndarray
    q: np.ndarray
    qbar: np.ndarray
    h: np.ndarray
    resolved: np.ndarray
    kinks: Tuple[int, ...] = ()
    retries: int = 0

    @property
    def spacing(self) -> float:
        return float(self.t[1] - self.t[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x": self.x.tolist(),
            "v0": self.v0.tolist(),
            "v1": self.v1.tolist(),
            "n_samples": len(self.t),
            "h_max": float(np.max(self.h)),
            "h_min": float(np.min(self.h)),
            "n_unresolved": int(np.sum(~self.resolved)),
            "kinks": [float(self.t[i]) for i in self.kinks],
            "retries": self.retries,
        }


def _segment_points(
    model: ManifoldModel, x: np.ndarray, v0: np.ndarray, v1: np.ndarray, ts: np.ndarray
) -> Dict[str, np.ndarray]:
    """All segment quantities at the times ts, computed in shared batches."""
    step = float(get_setting("shooting_step"))
    m = len(ts)
    dv = v1 - v0
    V = (1.0 - ts)[:, None] * v0 + ts[:, None] * v1
    stacked = np.concatenate([V, V - YDOT_STEP * dv, V + YDOT_STEP * dv])
    points, finals, ok = exp_batch(model, np.repeat(x[None], 3 * m, axis=0), stacked, 1.0, step)
    if not ok.all():
        raise PreconditionError("Segment geodesics leave the chart")
    Y = points[:m]
    qbar = -finals[:m]
    ydot = chart_difference(model, points[m : 2 * m], points[2 * m :]) / (2.0 * YDOT_STEP)

    d = np.empty(m)
    w_min = np.full((m, model.dim), np.nan)
    resolved = np.zeros(m, dtype=bool)
    for i in range(m):
        res = distance(model, x, Y[i], {"hints": [V[i]]})
        d[i] = res.value
        if res.converged and res.multiplicity == 1:
            resolved[i] = True
            w_min[i] = res.minimizer_velocity.components

    q = np.full((m, model.dim), np.nan)
    if resolved.any():
        _, back, ok_q = exp_batch(model, np.repeat(x[None], int(resolved.sum()), axis=0), w_min[resolved], 1.0, step)
        q[resolved] = -back
        resolved[np.flatnonzero(resolved)[~ok_q]] = False

    g = metric_at(model, x)
    h = 0.5 * np.einsum("zi,ij,zj->z", V, g, V) - 0.5 * d * d
    return {"v": V, "y": Y, "ydot": ydot, "q": q, "qbar": qbar, "h": h, "resolved": resolved}


def detect_kinks(t: np.ndarray, h: np.ndarray, factor: float = KINK_FACTOR) -> List[int]:
    """
    Indices where the centered second difference of h exceeds `factor` times
    the median of its neighbours.
    """
    h = np.asarray(h, dtype=float)
    if len(h) < 3:
        return []
    d2 = np.abs(h[:-2] - 2.0 * h[1:-1] + h[2:])
    kinks = []
    for i in range(len(d2)):
        lo, hi = max(0, i - KINK_WINDOW), min(len(d2), i + KINK_WINDOW + 1)
        neighbours = np.concatenate([d2[lo:i], d2[i + 1 : hi]])
        ref = float(np.median(neighbours)) if len(neighbours) else 0.0
        if d2[i] > KINK_FLOOR and d2[i] > factor * ref:
            kinks.append(i + 1)
    return kinks


def _widest_plateau(kinks: Sequence[int]) -> int:
    widest, run = 0, 0
    prev = None
    for k in kinks:
        run = run + 1 if prev is not None and k == prev + 1 else 1
        widest = max(widest, run)
        prev = k
    return widest


def _check_endpoint(model: ManifoldModel, x: np.ndarray, v: np.ndarray, name: str) -> None:
    g = metric_at(model, x)
    speed = math.sqrt(max(float(v @ g @ v), 0.0))
    if speed == 0:
        return
    t_cut = cut_time(model, x, TangentVector(x, v / speed)).t_cut
    if speed >= t_cut:
        raise PreconditionError(f"{name} = {v.tolist()} is not in I(x) (|{name}| = {speed:.6g}, t_cut = {t_cut:.6g})")


def segment_trace(
    model: ManifoldModel,
    x: Any,
    v0: Union[TangentVector, Sequence[float]],
    v1: Union[TangentVector, Sequence[float]],
    N: int = 64,
    require_injective: bool = True,
    seed: int = 0,
) -> SegmentTrace:
    """
    Sample v_t, y_t = exp_x(v_t), q-bar_t = -d/ds exp_x(s v_t)|_{s=1}, the
    minimizing q_t at y_t pointing back to x, and h(t) on N uniform times.

    Traces whose kinks form a plateau wider than 3 samples are recomputed with
    v0 and v1 perturbed by 1e-4 in random directions, up to 5 times.

    Raises:
        PreconditionError: If N < 32, or an endpoint is outside I(x) while
            require_injective is set

    Example:
        >>> torus = load_manifold("torus_2pi")
        >>> trace = segment_trace(torus, [0, 0], [1, 0], [0, 1])
        >>> float(abs(trace.h).max()) < 1e-8
        True
    """
    if N < MIN_SEGMENT_SAMPLES:
        raise PreconditionError(f"segment_trace needs N >= {MIN_SEGMENT_SAMPLES}, got {N}")
    xp = reduce_point(model, np.asarray(x, dtype=float))
    a = np.array(v0.components if isinstance(v0, TangentVector) else v0, dtype=float)
    b = np.array(v1.components if isinstance(v1, TangentVector) else v1, dtype=float)
    if require_injective:
        _check_endpoint(model, xp, a, "v0")
        _check_endpoint(model, xp, b, "v1")

    rng = np.random.default_rng(seed)
    frame = frame_at(model, xp)
    ts = np.linspace(0.0, 1.0, N)
    retries = 0
    while True:
        pts = _segment_points(model, xp, a, b, ts)
        kinks = detect_kinks(ts, pts["h"])
        if _widest_plateau(kinks) <= KINK_PLATEAU or retries >= PERTURB_RETRIES:
            break
        retries += 1
        logger.debug(f"Kink plateau in segment trace, perturbing endpoints (retry {retries})")
        for vec in (a, b):
            d = rng.standard_normal(model.dim)
            vec += PERTURB_SIZE * (frame @ (d / np.linalg.norm(d)))

    if np.min(pts["h"]) < -H_TOL:
        logger.warning(f"Segment trace on {model.name}: h dips to {np.min(pts['h']):.3e}")
    return SegmentTrace(
        model=model,
        x=xp,
        v0=a,
        v1=b,
        t=ts,
        v=pts["v"],
        y=pts["y"],
        ydot=pts["ydot"],
        q=pts["q"],
        qbar=pts["qbar"],
        h=pts["h"],
        resolved=pts["resolved"],
        kinks=tuple(kinks),
        retries=retries,
    )


def _guard_smooth(trace: SegmentTrace, t: float, step: float) -> None:
    if not (0.0 < t - step and t + step < 1.0):
        raise PreconditionError(f"t = {t} is too close to the segment ends for step {step}")
    reach = max(2.0 * trace.spacing, step)
    for i in trace.kinks:
        if abs(trace.t[i] - t) <= reach:
            raise KinkError(f"t = {t} is within {reach:.3g} of a kink at {trace.t[i]:.6g}")


def hdot_check(trace: SegmentTrace, t: float, fd_step: float = 1e-4) -> Tuple[float, float]:
    """
    dh/dt at t as <q_t - q-bar_t, y-dot_t>_{y_t} and by a centered difference.

    Raises:
        KinkError: If t is at a detected kink or y_t is a cut point
    """
    _guard_smooth(trace, t, fd_step)
    pts = _segment_points(trace.model, trace.x, trace.v0, trace.v1, np.array([t - fd_step, t, t + fd_step]))
    if not pts["resolved"][1]:
        raise KinkError(f"y_t at t = {t} is a cut point of x")
    g = metric_at(trace.model, pts["y"][1])
    formula = float((pts["q"][1] - pts["qbar"][1]) @ g @ pts["ydot"][1])
    fd = float((pts["h"][2] - pts["h"][0]) / (2.0 * fd_step))
    return formula, fd


def hddot_check(
    trace: SegmentTrace, t: float, quadrature_n: int = 16, fd_step: float = 1e-3
) -> Tuple[float, float]:
    """
    d^2h/dt^2 at t as (2/3) int_0^1 (1 - s) S-bar_(y_t, (1-s) q-bar_t + s q_t)(y-dot_t, q_t - q-bar_t) ds
    by Gauss-Legendre quadrature, and by a centered second difference.

    Raises:
        KinkError: If t is at a detected kink or y_t is a cut point
        HypothesisError: If some (1-s) q-bar_t + s q_t leaves NF(y_t)
    """
    _guard_smooth(trace, t, fd_step)
    pts = _segment_points(trace.model, trace.x, trace.v0, trace.v1, np.array([t - fd_step, t, t + fd_step]))
    if not pts["resolved"][1]:
        raise KinkError(f"y_t at t = {t} is a cut point of x")
    fd = float((pts["h"][2] - 2.0 * pts["h"][1] + pts["h"][0]) / fd_step**2)

    y, q, qbar, ydot = pts["y"][1], pts["q"][1], pts["qbar"][1], pts["ydot"][1]
    gap = q - qbar
    if np.linalg.norm(gap) < 1e-12:
        return 0.0, fd

    nodes, weights = np.polynomial.legendre.leggauss(quadrature_n)
    s_nodes = 0.5 * (nodes + 1.0)
    s_weights = 0.5 * weights
    total = 0.0
    for s, w in zip(s_nodes, s_weights):
        anchor = (1.0 - s) * qbar + s * q
        try:
            ctx = make_extended_cost_context(trace.model, y, anchor)
        except PreconditionError as e:
            raise HypothesisError(f"[q-bar_t, q_t] leaves NF(y_t) at s = {s:.4f}: {e}") from e
        total += w * (1.0 - s) * extended_mtw_tensor(ctx, ydot, gap).value
    return float(2.0 / 3.0 * total), fd


def export_segment_csv(trace: SegmentTrace, path: Union[str, Path]) -> None:
    """Write t, v_t, y_t, q_t, q-bar_t, h per sample."""
    n = trace.x.size
    header = (
        ["t"]
        + [f"v{i}" for i in range(n)]
        + [f"y{i}" for i in range(n)]
        + [f"q{i}" for i in range(n)]
        + [f"qbar{i}" for i in range(n)]
        + ["h"]
    )
    rows = [
        [trace.t[k]] + list(trace.v[k]) + list(trace.y[k]) + list(trace.q[k]) + list(trace.qbar[k]) + [trace.h[k]]
        for k in range(len(trace.t))
    ]
    write_csv(Path(path), header, rows)


# ---------------------------------------------------------------------------
# Differential inequalities
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiffIneqCheck:
    """Hypothesis and conclusion of a differential-inequality lemma on a sampled h."""

    lemma: str
    t: np.ndarray
    h: np.ndarray
    c: float
    C: float
    kinks: Tuple[float, ...]
    hypothesis_ok: bool
    conclusion_ok: bool
    bound: np.ndarray
    max_excess: float
    inconclusive: bool = False
    eps: Optional[float] = None
    sup_bound_ok: Optional[bool] = None
    readings: Dict[str, bool] = field(default_factory=dict)

    @property
    def falsified(self) -> bool:
        return self.hypothesis_ok and not self.conclusion_ok and not self.inconclusive

    def to_dict(self) -> DiffIneqReport:
        report: DiffIneqReport = {
            "lemma": self.lemma,
            "c": self.c,
            "C": self.C,
            "hypothesis_ok": self.hypothesis_ok,
            "conclusion_ok": self.conclusion_ok,
            "falsified": self.falsified,
            "inconclusive": self.inconclusive,
            "kinks": list(self.kinks),
            "max_excess": self.max_excess,
        }
        if self.readings:
            report["readings"] = dict(self.readings)
        if self.eps is not None:
            report["sup_bound_ok"] = self.sup_bound_ok
        return report


HTrace = Union[SegmentTrace, Tuple[Sequence[float], Sequence[float]]]


def _unpack(h_trace: HTrace) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(h_trace, SegmentTrace):
        return h_trace.t, h_trace.h
    t, h = h_trace
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    if t.shape != h.shape or len(t) < 5:
        raise PreconditionError("h trace needs matching t and h arrays with at least 5 samples")
    return t, h


def _derivatives(t: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centered first and second differences at the interior samples, and their mask."""
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(dt[0])):
        raise PreconditionError("h trace must be sampled on a uniform grid")
    step = dt[0]
    hd = np.full_like(h, np.nan)
    hdd = np.full_like(h, np.nan)
    hd[1:-1] = (h[2:] - h[:-2]) / (2.0 * step)
    hdd[1:-1] = (h[2:] - 2.0 * h[1:-1] + h[:-2]) / step**2
    usable = np.zeros(len(h), dtype=bool)
    usable[1:-1] = True
    return hd, hdd, usable


def _local_max(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    out[1:] = np.maximum(out[1:], a[:-1])
    out[:-1] = np.maximum(out[:-1], a[1:])
    return out


def _truncation_band(t: np.ndarray, h: np.ndarray, hdd: np.ndarray, rate: float) -> np.ndarray:
    """Per-sample error bound of the centered differences: step^2 (|h''''| + rate |h'''|), estimated from hdd."""
    step = t[1] - t[0]
    inner = hdd[1:-1]
    d3 = np.zeros_like(h)
    d4 = np.zeros_like(h)
    d3[2:-2] = np.abs(inner[2:] - inner[:-2]) / (2.0 * step)
    d4[2:-2] = np.abs(inner[2:] - 2.0 * inner[1:-1] + inner[:-2]) / step**2
    for d in (d3, d4):
        d[1], d[-2] = d[2], d[-3]
    return step**2 * (_local_max(d4) + rate * _local_max(d3))


def _hypothesis(
    t: np.ndarray, h: np.ndarray, rate: float, c_term: float
) -> Tuple[bool, Tuple[float, ...], bool, bool]:
    """
    Check h'' >= -rate |h'| + c_term off kinks.

    Samples within rounding of the bound count as satisfied. Samples that
    only pass inside the finite-difference error band are marginal.

    Returns:
        (ok, kink times, too many kinks, any marginal sample)
    """
    hd, hdd, usable = _derivatives(t, h)
    kinks = detect_kinks(t, h)
    for k in kinks:
        usable[max(0, k - 1) : k + 2] = False
    too_kinked = len(kinks) > 0.1 * len(t)
    step = t[1] - t[0]
    floor = HYP_REL_FLOOR * max(1.0, abs(c_term), rate) + 8.0 * EPS * float(np.max(np.abs(h))) / step**2
    band = _truncation_band(t, h, hdd, rate)[usable]
    gap = hdd[usable] - (-rate * np.abs(hd[usable]) + c_term)
    ok = bool(np.all(gap >= -(floor + band)))
    marginal = bool(np.any(gap < -floor))
    return ok, tuple(float(t[k]) for k in kinks), too_kinked, marginal


def _endpoint_guard(t: np.ndarray, h: np.ndarray, nonnegative: bool) -> None:
    if abs(h[0]) > H_TOL or abs(h[-1]) > H_TOL:
        raise PreconditionError(f"h must vanish at both ends (h(0)={h[0]:.3e}, h(1)={h[-1]:.3e})")
    if nonnegative and np.min(h) < -H_TOL:
        raise PreconditionError(f"h must be nonnegative (min {np.min(h):.3e})")


def check_lemineq(
    h_trace: HTrace, c: float, eps: Optional[float] = None, tol: float = CHECK_TOL
) -> DiffIneqCheck:
    """
    If h'' >= -|h'| - c off kinks, then h(t) <= c t (1 - t); with
    c <= sup h + eps also sup h <= eps / 3.

    Raises:
        PreconditionError: If h does not vanish at the ends or is negative

    Example:
        >>> t = np.linspace(0, 1, 101)
        >>> check_lemineq((t, t * (1 - t)), c=2.0).conclusion_ok
        True
    """
    t, h = _unpack(h_trace)
    _endpoint_guard(t, h, nonnegative=True)
    hyp_ok, kinks, too_kinked, marginal = _hypothesis(t, h, 1.0, -c)
    bound = c * t * (1.0 - t)
    excess = h - bound
    conclusion_ok = bool(np.all(excess <= tol))

    sup_ok: Optional[bool] = None
    h_sup = float(np.max(np.abs(h)))
    if eps is not None and c <= h_sup + eps:
        sup_ok = h_sup <= eps / 3.0 + tol
        conclusion_ok = conclusion_ok and sup_ok

    check = DiffIneqCheck(
        lemma="lemineq",
        t=t,
        h=h,
        c=float(c),
        C=1.0,
        kinks=kinks,
        hypothesis_ok=hyp_ok,
        conclusion_ok=conclusion_ok,
        bound=bound,
        max_excess=float(np.max(excess)),
        inconclusive=too_kinked or (marginal and not conclusion_ok),
        eps=eps,
        sup_bound_ok=sup_ok,
    )
    if check.falsified:
        logger.error(f"lemineq falsified: h exceeds c t(1-t) by {check.max_excess:.3e} with c={c}")
    return check


def sharp_bis_bound(t: np.ndarray, c: float, C: float) -> np.ndarray:
    """2 c e^(1+C) min((1 - e^{-(1+C) t}), (1 - e^{-(1+C)(1-t)})) / (1 + C)."""
    lam = 1.0 + C
    ramp = np.minimum(1.0 - np.exp(-lam * t), 1.0 - np.exp(-lam * (1.0 - t))) / lam
    return 2.0 * c * math.exp(lam) * ramp


def check_lemineqbis(h_trace: HTrace, c: float, C: float, tol: float = CHECK_TOL) -> DiffIneqCheck:
    """
    If h'' >= -C |h'| - c off kinks, then h(t) <= 4 c e^(1+C) t (1 - t).

    The sharper intermediate bound is reported under readings["sharp"].
    """
    t, h = _unpack(h_trace)
    _endpoint_guard(t, h, nonnegative=True)
    hyp_ok, kinks, too_kinked, marginal = _hypothesis(t, h, C, -c)
    bound = 4.0 * c * math.exp(1.0 + C) * t * (1.0 - t)
    sharp = sharp_bis_bound(t, c, C)
    stated_ok = bool(np.all(h - bound <= tol))
    sharp_ok = bool(np.all(h - sharp <= tol))

    check = DiffIneqCheck(
        lemma="lemineqbis",
        t=t,
        h=h,
        c=float(c),
        C=float(C),
        kinks=kinks,
        hypothesis_ok=hyp_ok,
        conclusion_ok=stated_ok and sharp_ok,
        bound=bound,
        max_excess=float(np.max(h - bound)),
        inconclusive=too_kinked or (marginal and not (stated_ok and sharp_ok)),
        readings={"stated": stated_ok, "sharp": sharp_ok},
    )
    if check.falsified:
        logger.error(f"lemineqbis falsified with c={c}, C={C}")
    return check


def check_lemineqbism(
    h_trace: HTrace, c: float, C: float, reading: Optional[str] = None, tol: float = CHECK_TOL
) -> DiffIneqCheck:
    """
    If h'' >= -C |h'| + c off kinks, compare h with both readings of the
    conclusion: literal h(t) <= -4 c e^(1+C) t(1-t), and corrected
    h(t) <= -c t(1-t) / (4 e^(1+C)).

    `reading` (default: the bism_reading setting) picks the one that
    decides conclusion_ok; both are reported.
    """
    reading = str(get_setting("bism_reading")) if reading is None else reading
    if reading not in ("literal", "corrected"):
        raise PreconditionError(f"Unknown reading {reading!r}; valid readings: literal, corrected")
    t, h = _unpack(h_trace)
    _endpoint_guard(t, h, nonnegative=False)
    hyp_ok, kinks, too_kinked, marginal = _hypothesis(t, h, C, c)

    base = t * (1.0 - t)
    bounds = {
        "literal": -4.0 * c * math.exp(1.0 + C) * base,
        "corrected": -c * base / (4.0 * math.exp(1.0 + C)),
    }
    readings = {name: bool(np.all(h - b <= tol)) for name, b in bounds.items()}
    bound = bounds[reading]
    check = DiffIneqCheck(
        lemma="lemineqbism",
        t=t,
        h=h,
        c=float(c),
        C=float(C),
        kinks=kinks,
        hypothesis_ok=hyp_ok,
        conclusion_ok=readings[reading],
        bound=bound,
        max_excess=float(np.max(h - bound)),
        inconclusive=too_kinked or (marginal and not readings[reading]),
        readings=readings,
    )
    if check.falsified:
        logger.error(f"lemineqbism ({reading} reading) falsified with c={c}, C={C}")
    return check


def generate_admissible_profiles(
    kind: str,
    c: float,
    C: float = 1.0,
    n: int = 100,
    seed: int = 0,
    n_grid: int = 201,
    max_bumps: int = 3,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Random h with h(0) = h(1) = 0 satisfying a lemma's hypothesis.

    Integrates h'' = -C |h'| - c + zeta(t) (``lemineq`` forces C = 1;
    ``lemineqbism`` uses +c) where zeta >= 0 is a random sum of Gaussian
    bumps with total height at most c, and bisects on h'(0) so that h(1) = 0.

    Returns:
        Tuple (t, H) with t of shape (n_grid,) and H of shape (n, n_grid)
    """
    if kind not in LEMMAS:
        raise PreconditionError(f"Unknown profile kind {kind!r}; valid kinds: {', '.join(LEMMAS)}")
    if c < 0 or C < 0:
        raise PreconditionError("Profile constants must be nonnegative")
    rate = 1.0 if kind == "lemineq" else float(C)
    c_term = c if kind == "lemineqbism" else -c

    rng = np.random.default_rng(seed)
    heights = rng.dirichlet(np.ones(max_bumps), size=n) * (c * rng.uniform(0.0, 1.0, size=(n, 1)))
    centers = rng.uniform(0.1, 0.9, size=(n, max_bumps))
    widths = rng.uniform(0.08, 0.2, size=(n, max_bumps))

    substeps = 2
    n_steps = (n_grid - 1) * substeps
    k = max_bumps

    def rhs(y: np.ndarray) -> np.ndarray:
        t, hd = y[:, 0:1], y[:, 2]
        amp, mid, wid = y[:, 3 : 3 + k], y[:, 3 + k : 3 + 2 * k], y[:, 3 + 2 * k :]
        zeta = np.sum(amp * np.exp(-(((t - mid) / wid) ** 2)), axis=1)
        out = np.zeros_like(y)
        out[:, 0] = 1.0
        out[:, 1] = hd
        out[:, 2] = -rate * np.abs(hd) + c_term + zeta
        return out

    def shoot(slopes: np.ndarray, record: bool = False) -> np.ndarray:
        y0 = np.concatenate(
            [np.zeros((n, 1)), np.zeros((n, 1)), slopes[:, None], heights, centers, widths], axis=1
        )
        history, _ = rk4_integrate(rhs, y0, 1.0 / n_steps, n_steps, record=record)
        return history

    span = 10.0 * (abs(c) + 1.0) * math.exp(rate)
    lo = np.full(n, -span)
    hi = np.full(n, span)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        end = shoot(mid)[-1, :, 1]
        above = end > 0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.max(hi - lo) < 1e-13:
            break

    history = shoot(0.5 * (lo + hi), record=True)
    H = history[::substeps, :, 1].T.copy()
    H[:, 0] = 0.0
    H[:, -1] = 0.0
    t = np.linspace(0.0, 1.0, n_grid)
    logger.debug(f"Generated {n} {kind} profiles (c={c}, C={C}, seed={seed})")
    return t, H


# ---------------------------------------------------------------------------
# Semiconvexity of domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SemiconvexityReport:
    """Semiconvexity constants of a sampled star-shaped set or a sampled function."""

    mode: str
    delta_distance: float
    delta_radial: float
    kstar: float
    locality_nu: float
    convex: bool
    kappa: Optional[float]
    n_pairs: int
    violations: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> SemiconvexityReportDict:
        return {
            "mode": self.mode,
            "delta_distance": self.delta_distance,
            "delta_radial": self.delta_radial,
            "kstar": self.kstar,
            "locality_nu": self.locality_nu,
            "convex": self.convex,
            "kappa": self.kappa,
            "n_pairs": self.n_pairs,
            "violations": self.violations,
        }


class _PolarDomain:
    """Star-shaped set {r <= R(theta)} in orthonormal frame coordinates."""

    def __init__(self, sample: DomainSample) -> None:
        r = sample.t_cut_values
        if not sample.complete or not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise PreconditionError("Semiconvexity needs a star-shaped sample with every cut time resolved")
        self.angles = sample.angles
        self.radii = r
        self._a = np.append(sample.angles, 2.0 * math.pi)
        self._r = np.append(r, r[0])
        fine = np.linspace(0.0, 2.0 * math.pi, BOUNDARY_DENSITY * len(r), endpoint=False)
        self.polygon = self.radius(fine)[:, None] * np.stack([np.cos(fine), np.sin(fine)], axis=1)

    def radius(self, theta: np.ndarray) -> np.ndarray:
        return np.interp(np.mod(theta, 2.0 * math.pi), self._a, self._r)

    def boundary(self, idx: np.ndarray) -> np.ndarray:
        a = self.angles[idx]
        return self.radii[idx, None] * np.stack([np.cos(a), np.sin(a)], axis=1)

    def signed_radial(self, P: np.ndarray) -> np.ndarray:
        """|p| - R(theta(p)): radial distance outside, minus the radial clearance inside."""
        return np.linalg.norm(P, axis=-1) - self.radius(np.arctan2(P[..., 1], P[..., 0]))

    def distance(self, P: np.ndarray) -> np.ndarray:
        """Euclidean distance to the closed set (0 inside)."""
        flat = P.reshape(-1, 2)
        out = np.zeros(len(flat))
        outside = self.signed_radial(flat) > 0
        if outside.any():
            A = self.polygon
            B = np.roll(A, -1, axis=0)
            AB = B - A
            Q = flat[outside]
            for start in range(0, len(Q), 512):
                chunk = Q[start : start + 512]
                AP = chunk[:, None, :] - A[None]
                s = np.clip(np.einsum("mki,ki->mk", AP, AB) / np.einsum("ki,ki->k", AB, AB), 0.0, 1.0)
                closest = A[None] + s[..., None] * AB[None]
                rows = np.flatnonzero(outside)[start : start + 512]
                out[rows] = np.min(np.linalg.norm(chunk[:, None, :] - closest, axis=-1), axis=1)
        return out.reshape(P.shape[:-1])


def _chord_pairs(n: int, stride: int, nu: Optional[float], pts: np.ndarray) -> List[Tuple[int, int]]:
    idx = np.arange(0, n, stride)
    pairs = []
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            i, j = int(idx[a]), int(idx[b])
            if nu is not None and np.linalg.norm(pts[i] - pts[j]) >= nu:
                continue
            pairs.append((i, j))
    return pairs


def _function_semiconvexity(t: np.ndarray, h: np.ndarray, nu: Optional[float], stride: int) -> Tuple[float, int]:
    idx = np.arange(0, len(t), stride)
    delta = 0.0
    count = 0
    for a in range(len(idx)):
        i = idx[a]
        for j in idx[a + 2 :]:
            if nu is not None and t[j] - t[i] >= nu:
                break
            k = np.arange(i + 1, j)
            s = (t[k] - t[i]) / (t[j] - t[i])
            excess = h[k] - (1.0 - s) * h[i] - s * h[j]
            delta = max(delta, float(np.max(2.0 * excess / (s * (1.0 - s) * (t[j] - t[i]) ** 2))))
            count += 1
    return max(delta, 0.0), count


def semiconvexity_test(
    domain: Union[DomainSample, Tuple[Sequence[float], Sequence[float]]],
    mode: str = "radial",
    nu: Optional[float] = None,
    stride: int = 1,
    tol: float = CHECK_TOL,
    n_times: int = CHORD_TIMES,
) -> SemiconvexityReport:
    """
    Smallest delta with f((1-t)a + tb) <= (1-t) f(a) + t f(b) + delta t(1-t)|a-b|^2/2
    over sampled chords, for f = dist(., closure) and f = rho(., closure).

    Chords join sampled TCL points (every `stride`-th of at most 72 evenly
    spaced directions; halving the stride only adds chords). With `nu` only
    chords shorter than nu are used. K* is the largest rho/dist ratio just
    outside the boundary; the uniform convexity modulus kappa is the smallest
    radial clearance ratio over chords, reported when the set is convex.

    mode is ``radial`` or ``distance`` (which constant decides the convexity
    verdict) for a DomainSample, or ``function`` for a sampled (t, h).

    Raises:
        PreconditionError: If the sample is not star-shaped or fully resolved
    """
    if stride < 1:
        raise PreconditionError(f"stride must be >= 1, got {stride}")
    locality = math.inf if nu is None else float(nu)

    if mode == "function":
        t, h = _unpack(domain)  # type: ignore[arg-type]
        delta, count = _function_semiconvexity(t, h, nu, stride)
        return SemiconvexityReport("function", delta, delta, math.nan, locality, delta <= tol, None, count)

    if mode not in ("radial", "distance"):
        raise PreconditionError(f"Unknown mode {mode!r}; valid modes: radial, distance, function")
    if not isinstance(domain, DomainSample):
        raise PreconditionError("Domain modes need a DomainSample")

    shape = _PolarDomain(domain)
    n = len(shape.angles)
    base = max(1, n // MAX_CHORD_POINTS)
    all_pts = shape.boundary(np.arange(n))
    pairs = _chord_pairs(n, base * stride, nu, all_pts)
    if not pairs:
        raise PreconditionError("No chords to test; increase nu or lower the stride")

    I = np.array([p[0] for p in pairs])
    J = np.array([p[1] for p in pairs])
    A, B = all_pts[I], all_pts[J]
    T = np.linspace(0.0, 1.0, n_times + 2)[1:-1]
    P = (1.0 - T)[None, :, None] * A[:, None, :] + T[None, :, None] * B[:, None, :]
    scale = T * (1.0 - T) * 0.5
    chord_sq = np.sum((B - A) ** 2, axis=1)
    denom = scale[None, :] * chord_sq[:, None]

    signed = shape.signed_radial(P)
    rho = np.maximum(signed, 0.0)
    dist = shape.distance(P)
    delta_radial = float(np.max(rho / denom))
    delta_distance = float(np.max(dist / denom))

    violations = []
    ratio = rho / denom
    for r, k in zip(*np.nonzero(ratio > tol)):
        violations.append(
            {"i": int(I[r]), "j": int(J[r]), "t": float(T[k]), "rho": float(rho[r, k]), "delta": float(ratio[r, k])}
        )
    violations.sort(key=lambda item: -item["delta"])
    violations = violations[:20]

    # K*: just outside the boundary, between grid directions
    idx = np.arange(0, n, base)
    mid_angles = shape.angles[idx] + math.pi / n
    radial_dir = np.stack([np.cos(mid_angles), np.sin(mid_angles)], axis=1)
    mean_r = float(np.mean(shape.radii))
    offsets = np.array([0.02, 0.05]) * mean_r
    outer = (shape.radius(mid_angles)[:, None, None] + offsets[None, :, None]) * radial_dir[:, None, :]
    outer_dist = shape.distance(outer)
    kstar = float(np.max(offsets[None, :] / np.maximum(outer_dist, 1e-300)))

    verdict_delta = delta_radial if mode == "radial" else delta_distance
    convex = verdict_delta <= tol
    kappa = max(0.0, float(np.min(-signed / denom))) if convex else None
    logger.info(
        f"Semiconvexity of I(x) on {domain.model.name}: delta_radial={delta_radial:.3e}, "
        f"delta_distance={delta_distance:.3e}, K*={kstar:.4g}"
    )
    return SemiconvexityReport(
        mode=mode,
        delta_distance=delta_distance,
        delta_radial=delta_radial,
        kstar=kstar,
        locality_nu=locality,
        convex=convex,
        kappa=kappa,
        n_pairs=len(pairs),
        violations=violations,
    )


def verify_lipcontrol(
    model: ManifoldModel,
    x: Any,
    pairs: Sequence[Tuple[Sequence[float], Sequence[float]]],
    sample: DomainSample,
    K_fit: Optional[float] = None,
    n_times: int = 9,
) -> LipcontrolReport:
    """
    Smallest K with rho_x(v_t, I(x)) <= K |v1 - v0| and
    rho_{y_t}(q-bar_t, I(y_t)) <= K |v1 - v0| over sampled segments.

    rho at x comes from the domain sample; rho at y_t from the cut time of
    q-bar_t / |q-bar_t|. Unresolved samples are counted in n_flagged.
    """
    xp = reduce_point(model, np.asarray(x, dtype=float))
    gx = metric_at(model, xp)
    ts = np.linspace(0.0, 1.0, n_times + 2)[1:-1]
    src = 0.0
    tgt = 0.0
    count = 0
    flagged = 0
    for v0, v1 in pairs:
        a = np.asarray(v0, dtype=float)
        b = np.asarray(v1, dtype=float)
        span = math.sqrt(float((b - a) @ gx @ (b - a)))
        if span == 0:
            continue
        V = (1.0 - ts)[:, None] * a + ts[:, None] * b
        Y, finals, ok = exp_batch(model, np.repeat(xp[None], len(ts), axis=0), V)
        for k in range(len(ts)):
            try:
                if not ok[k]:
                    raise PreconditionError("segment geodesic left the chart")
                rho_x = radial_distance_to_domain(sample, V[k])
                qbar = -finals[k]
                gy = metric_at(model, Y[k])
                length = math.sqrt(float(qbar @ gy @ qbar))
                rho_y = max(0.0, length - cut_time(model, Y[k], TangentVector(Y[k], qbar / length)).t_cut)
            except GeometryError as e:
                flagged += 1
                logger.warning(f"verify_lipcontrol: sample skipped: {e}")
                continue
            src = max(src, rho_x / span)
            tgt = max(tgt, rho_y / span)
            count += 1

    K = max(src, tgt)
    if K_fit is not None and K > K_fit:
        logger.warning(f"Fitted K={K:.4g} exceeds the supplied K={K_fit:.4g}")
    return {
        "K": K,
        "n_samples": count,
        "n_flagged": flagged,
        "max_source_ratio": src,
        "max_target_ratio": tgt,
    }
