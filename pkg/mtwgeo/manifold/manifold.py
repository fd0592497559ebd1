"""
Manifold models for mtwgeo.

This module defines the coordinate-level manifold abstraction used by every
other module: a chart description, vectorized metric, Christoffel and
curvature evaluators, and optional closed-form exponential, distance, logarithm
and focal-time shortcuts. It also builds the shipped models (round spheres,
flat tori, surfaces of revolution) from declarations of the form
``{"type": "sphere" | "flat_torus" | "revolution", "params": {...}}``.

All evaluators accept arrays of chart points with shape (..., dim) and are
pure, so a model can be shared freely between worker threads.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial

from ..config import get_setting
from ..errors import (
    DegenerateInputError,
    DomainError,
    PreconditionError,
    ScenarioError,
)
from ..types import Diagnostic, ManifoldDeclaration
from ..utils import orthonormal_frame

logger = logging.getLogger(__name__)

# Constants
MANIFOLD_TYPES = ("sphere", "flat_torus", "revolution")
PROFILE_BASES = ("poly", "fourier")
RIEMANN_STEP = 1e-4
ANTIPODAL_TOL = 1e-9
PROFILE_SAMPLES = 2001

ChartPoint = np.ndarray
ArrayMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ChartSpec:
    """Coordinate box of a single chart; periodic coordinates wrap."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    periodic: Tuple[bool, ...]
    names: Tuple[str, ...]

    @property
    def periods(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A tangent vector given by chart components at a chart point."""

    base: np.ndarray
    components: np.ndarray

    def __post_init__(self) -> None:
        base = np.asarray(self.base, dtype=float).reshape(-1)
        comps = np.asarray(self.components, dtype=float).reshape(-1)
        if base.shape != comps.shape:
            raise PreconditionError(
                f"Tangent vector dimension {comps.size} does not match "
                f"base point dimension {base.size}"
            )
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "components", comps)

    def scaled(self, factor: float) -> "TangentVector":
        return TangentVector(self.base, factor * self.components)

    def to_dict(self) -> Dict[str, Any]:
        return {"base": self.base.tolist(), "components": self.components.tolist()}


@dataclass(frozen=True, eq=False)
class ManifoldModel:
    """
    Immutable description of a Riemannian manifold in one chart.

    Batched evaluators map (..., dim) points to (..., dim, dim) metrics,
    (..., dim, dim, dim) Christoffel arrays Gamma[..., k, i, j], and for
    surfaces (..., ) Gaussian curvatures. Closed-form shortcuts are optional;
    numerical fallbacks are used when they are absent.
    """

    name: str
    dim: int
    chart: ChartSpec
    metric_eval: ArrayMap
    diameter_bound: float
    christoffel_eval: Optional[ArrayMap] = None
    curvature_eval: Optional[ArrayMap] = None
    analytic_exp: Optional[Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None
    analytic_dist: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    analytic_log: Optional[Callable[..., List[np.ndarray]]] = None
    analytic_focal: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    injectivity_radius: Optional[float] = None
    recenter: Optional[Callable[[np.ndarray, np.ndarray], Any]] = None
    declaration: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ScenarioError(f"Dimension must be positive, got {self.dim}", field="dim")
        if not self.diameter_bound > 0:
            raise ScenarioError(
                f"diameter_bound must be positive, got {self.diameter_bound}",
                field="diameter_bound",
            )


# ---------------------------------------------------------------------------
# Chart helpers
# ---------------------------------------------------------------------------


def reduce_point(model: ManifoldModel, p: np.ndarray) -> np.ndarray:
    """Wrap periodic coordinates into [lower, upper)."""
    p = np.array(p, dtype=float, copy=True)
    lower = np.asarray(model.chart.lower)
    periods = model.chart.periods
    for i, periodic in enumerate(model.chart.periodic):
        if periodic:
            p[..., i] = lower[i] + np.mod(p[..., i] - lower[i], periods[i])
    return p


def chart_difference(model: ManifoldModel, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Shortest chart displacement q - p, wrapping periodic coordinates."""
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    periods = model.chart.periods
    for i, periodic in enumerate(model.chart.periodic):
        if periodic:
            d[..., i] = d[..., i] - periods[i] * np.round(d[..., i] / periods[i])
    return d


def outside_mask(model: ManifoldModel, p: np.ndarray, margin: float) -> np.ndarray:
    """Boolean mask of points within `margin` of a non-periodic chart edge."""
    p = np.asarray(p, dtype=float)
    out = np.zeros(p.shape[:-1], dtype=bool)
    for i, periodic in enumerate(model.chart.periodic):
        if not periodic:
            out |= p[..., i] <= model.chart.lower[i] + margin
            out |= p[..., i] >= model.chart.upper[i] - margin
    return out


def in_domain(model: ManifoldModel, p: np.ndarray, margin: float = 0.0) -> bool:
    """Whether a single point lies in the chart domain."""
    p = np.asarray(p, dtype=float)
    if p.shape != (model.dim,) or not np.all(np.isfinite(p)):
        return False
    return not bool(outside_mask(model, p, margin))


def _checked_point(model: ManifoldModel, p: Any, margin: float = 0.0) -> np.ndarray:
    point = np.asarray(p, dtype=float).reshape(-1)
    if point.shape != (model.dim,):
        raise DomainError(
            f"Point has {point.size} coordinates, {model.name} has dimension {model.dim}"
        )
    point = reduce_point(model, point)
    if not in_domain(model, point, margin):
        raise DomainError(f"Point {point.tolist()} is outside the chart of {model.name}")
    return point


# ---------------------------------------------------------------------------
# Batched evaluators (no domain checks; used inside integrators)
# ---------------------------------------------------------------------------


def christoffel_field(model: ManifoldModel, points: np.ndarray) -> np.ndarray:
    """Christoffel symbols Gamma[..., k, i, j] at a batch of points."""
    if model.christoffel_eval is not None:
        return model.christoffel_eval(points)
    return _fd_christoffel(model, points)


def _fd_christoffel(model: ManifoldModel, points: np.ndarray) -> np.ndarray:
    h = float(get_setting("christoffel_step"))
    n = model.dim
    points = np.asarray(points, dtype=float)
    g = model.metric_eval(points)
    dg = np.empty(points.shape[:-1] + (n, n, n))
    for m in range(n):
        shift = np.zeros(n)
        shift[m] = h
        dg[..., m, :, :] = (
            model.metric_eval(points + shift) - model.metric_eval(points - shift)
        ) / (2.0 * h)
    # Gamma^k_ij = 1/2 g^kl (d_i g_lj + d_j g_li - d_l g_ij)
    combo = (
        np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg) - dg
    )
    return 0.5 * np.einsum("...kl,...lij->...kij", np.linalg.inv(g), combo)


def riemann_field(model: ManifoldModel, points: np.ndarray) -> np.ndarray:
    """
    Riemann tensor R[..., l, i, j, k] with R(d_i, d_j) d_k = R^l_ijk d_l.

    Surfaces with a closed-form Gaussian curvature use
    R^l_ijk = K (g_jk delta^l_i - g_ik delta^l_j); otherwise the tensor is
    assembled from centered differences of the Christoffel symbols.
    """
    points = np.asarray(points, dtype=float)
    n = model.dim
    if model.curvature_eval is not None:
        g = model.metric_eval(points)
        K = np.asarray(model.curvature_eval(points), dtype=float)
        eye = np.eye(n)
        tensor = np.einsum("...jk,li->...lijk", g, eye) - np.einsum(
            "...ik,lj->...lijk", g, eye
        )
        return K[..., None, None, None, None] * tensor

    gamma = christoffel_field(model, points)
    dgamma = np.empty(points.shape[:-1] + (n, n, n, n))
    for i in range(n):
        shift = np.zeros(n)
        shift[i] = RIEMANN_STEP
        dgamma[..., i, :, :, :] = (
            christoffel_field(model, points + shift)
            - christoffel_field(model, points - shift)
        ) / (2.0 * RIEMANN_STEP)
    return (
        np.einsum("...iljk->...lijk", dgamma)
        - np.einsum("...jlik->...lijk", dgamma)
        + np.einsum("...lim,...mjk->...lijk", gamma, gamma)
        - np.einsum("...ljm,...mik->...lijk", gamma, gamma)
    )


def curvature_operator(
    model: ManifoldModel, points: np.ndarray, velocities: np.ndarray, frames: np.ndarray
) -> np.ndarray:
    """
    Jacobi curvature operator in a frame: R_ab = <R(e_a, v) v, e_b>.

    Args:
        points: (B, n) base points
        velocities: (B, n) geodesic velocities
        frames: (B, n, n) frames, column a is e_a

    Returns:
        (B, n, n) symmetric matrices
    """
    g = model.metric_eval(points)
    if model.curvature_eval is not None:
        K = np.asarray(model.curvature_eval(points), dtype=float)
        gv = np.einsum("zij,zj->zi", g, velocities)
        ev = np.einsum("zia,zi->za", frames, gv)
        ee = np.einsum("zia,zij,zjb->zab", frames, g, frames)
        vv = np.einsum("zi,zi->z", velocities, gv)
        return K[:, None, None] * (
            vv[:, None, None] * ee - ev[:, :, None] * ev[:, None, :]
        )

    riem = riemann_field(model, points)
    rve = np.einsum("zlijk,zia,zj,zk->zla", riem, frames, velocities, velocities)
    mat = np.einsum("zlm,zla,zmb->zab", g, rve, frames)
    return 0.5 * (mat + np.swapaxes(mat, 1, 2))


# ---------------------------------------------------------------------------
# Pointwise operations
# ---------------------------------------------------------------------------


def metric_at(model: ManifoldModel, p: Any) -> np.ndarray:
    """
    Metric matrix g_x at a chart point.

    Args:
        model: Manifold model
        p: Chart point (dim-vector); periodic coordinates are reduced first

    Returns:
        Symmetric positive-definite (dim, dim) matrix

    Raises:
        DomainError: If the point lies outside the chart domain

    Example:
        >>> metric_at(load_manifold("sphere_r1"), [np.pi / 3, 0.0])
        array([[1.  , 0.  ],
               [0.  , 0.75]])
    """
    point = _checked_point(model, p)
    return np.asarray(model.metric_eval(point), dtype=float)


def christoffel_at(model: ManifoldModel, p: Any) -> np.ndarray:
    """
    Christoffel symbols Gamma[k, i, j] at a chart point.

    Raises:
        DomainError: If the point, or the finite-difference stencil around
            it, leaves the chart domain
    """
    margin = 0.0 if model.christoffel_eval is not None else float(
        get_setting("christoffel_step")
    )
    point = _checked_point(model, p, margin)
    return christoffel_field(model, point)


def riemann_at(model: ManifoldModel, p: Any) -> np.ndarray:
    """Riemann tensor R[l, i, j, k] at a chart point."""
    margin = 0.0 if model.curvature_eval is not None else 2 * RIEMANN_STEP
    point = _checked_point(model, p, margin)
    return riemann_field(model, point)


def _components(v: Union[TangentVector, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(v, TangentVector):
        return v.components
    return np.asarray(v, dtype=float).reshape(-1)


def inner(model: ManifoldModel, v: TangentVector, w: TangentVector) -> float:
    """Metric inner product g_x(v, w) of two vectors at the same base point."""
    if np.any(np.abs(chart_difference(model, v.base, w.base)) > 1e-12):
        raise PreconditionError("Tangent vectors have different base points")
    g = metric_at(model, v.base)
    return float(v.components @ g @ w.components)


def norm(model: ManifoldModel, v: TangentVector) -> float:
    """Metric norm |v|_x."""
    g = metric_at(model, v.base)
    return math.sqrt(max(float(v.components @ g @ v.components), 0.0))


def sectional_curvature(
    model: ManifoldModel,
    p: Any,
    xi: Union[TangentVector, Sequence[float], np.ndarray],
    eta: Union[TangentVector, Sequence[float], np.ndarray],
) -> float:
    """
    Sectional curvature of the plane spanned by xi and eta at p.

    Raises:
        DegenerateInputError: If xi and eta are linearly dependent
        DomainError: If p is outside the chart
    """
    point = reduce_point(model, np.asarray(p, dtype=float))
    a = _components(xi)
    b = _components(eta)
    g = metric_at(model, point)
    aa, bb, ab = a @ g @ a, b @ g @ b, a @ g @ b
    area = aa * bb - ab * ab
    if area <= 1e-12 * max(aa * bb, 1e-300):
        raise DegenerateInputError("xi and eta span a degenerate plane")

    riem = riemann_at(model, point)
    rabb = np.einsum("lijk,i,j,k->l", riem, a, b, b)
    return float(rabb @ g @ a / area)


def gaussian_curvature(model: ManifoldModel, p: Any) -> float:
    """Gaussian curvature of a surface at p."""
    if model.dim != 2:
        raise PreconditionError("Gaussian curvature is defined for surfaces only")
    point = _checked_point(model, p)
    if model.curvature_eval is not None:
        return float(model.curvature_eval(point))
    return sectional_curvature(model, point, [1.0, 0.0], [0.0, 1.0])


def frame_at(model: ManifoldModel, p: Any, first: Optional[np.ndarray] = None) -> np.ndarray:
    """Orthonormal frame at p (columns), optionally starting with `first`."""
    return orthonormal_frame(metric_at(model, p), first)


def check_metric(model: ManifoldModel, points: np.ndarray) -> Dict[str, float]:
    """
    Sample the metric invariants on a set of chart points.

    Returns:
        Dict with the largest symmetry defect and smallest eigenvalue
    """
    points = np.asarray(points, dtype=float)
    g = model.metric_eval(points)
    defect = float(np.max(np.abs(g - np.swapaxes(g, -1, -2))))
    sym = 0.5 * (g + np.swapaxes(g, -1, -2))
    min_eig = float(np.min(np.linalg.eigvalsh(sym)))
    return {"symmetry_defect": defect, "min_eigenvalue": min_eig}


# ---------------------------------------------------------------------------
# Round sphere
# ---------------------------------------------------------------------------


def _sphere_embed(p: np.ndarray) -> np.ndarray:
    th, ph = p[..., 0], p[..., 1]
    st = np.sin(th)
    return np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=-1)


def _sphere_basis(p: np.ndarray) -> np.ndarray:
    th, ph = p[..., 0], p[..., 1]
    ct, st, cp, sp = np.cos(th), np.sin(th), np.cos(ph), np.sin(ph)
    d_th = np.stack([ct * cp, ct * sp, -st], axis=-1)
    d_ph = np.stack([-st * sp, st * cp, np.zeros_like(th)], axis=-1)
    return np.stack([d_th, d_ph], axis=-1)


def _sphere_chart(P: np.ndarray) -> np.ndarray:
    th = np.arccos(np.clip(P[..., 2], -1.0, 1.0))
    ph = np.mod(np.arctan2(P[..., 1], P[..., 0]), 2.0 * np.pi)
    return np.stack([th, ph], axis=-1)


def _sphere_from_ambient(p: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Chart components of ambient tangent vectors A[..., 3, m] at p."""
    basis = _sphere_basis(p)
    dth = np.einsum("...i,...im->...m", basis[..., 0], A)
    s2 = np.sin(p[..., 0]) ** 2
    safe = np.where(s2 > 1e-300, s2, 1.0)
    dph = np.einsum("...i,...im->...m", basis[..., 1], A) / safe[..., None]
    dph = np.where((s2 > 1e-300)[..., None], dph, 0.0)
    return np.stack([dth, dph], axis=-2)


def _sphere_exp(p: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    P = _sphere_embed(p)
    U = np.einsum("...ij,...j->...i", _sphere_basis(p), w)
    omega = np.linalg.norm(U, axis=-1)
    sinc = np.sinc(omega / np.pi)
    P1 = np.cos(omega)[..., None] * P + sinc[..., None] * U
    U1 = -(omega * np.sin(omega))[..., None] * P + np.cos(omega)[..., None] * U
    p1 = _sphere_chart(P1)
    w1 = _sphere_from_ambient(p1, U1[..., None])[..., 0]
    return p1, w1


def _sphere_angle(p: np.ndarray, q: np.ndarray) -> float:
    P = _sphere_embed(np.asarray(p, dtype=float))
    Q = _sphere_embed(np.asarray(q, dtype=float))
    return float(np.arctan2(np.linalg.norm(np.cross(P, Q)), P @ Q))


class SphereRotation:
    """
    Per-geodesic rotation of the sphere chart.

    Row b maps the initial point to (pi/2, 0) and the initial direction to the
    equator, so integration runs far from the coordinate poles.
    """

    def __init__(self, points: np.ndarray, velocities: np.ndarray) -> None:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        velocities = np.atleast_2d(np.asarray(velocities, dtype=float))
        P = _sphere_embed(points)
        U = np.einsum("zij,zj->zi", _sphere_basis(points), velocities)
        norms = np.linalg.norm(U, axis=-1)
        fallback = _sphere_basis(points)[..., 0]
        fallback = fallback / np.linalg.norm(fallback, axis=-1, keepdims=True)
        u = np.where(
            (norms > 1e-14)[:, None], U / np.where(norms > 1e-14, norms, 1.0)[:, None], fallback
        )
        self.Q = np.stack([P, u, np.cross(P, u)], axis=1)

    def points_to_work(self, p: np.ndarray) -> np.ndarray:
        return _sphere_chart(np.einsum("zij,...zj->...zi", self.Q, _sphere_embed(p)))

    def vectors_to_work(self, p: np.ndarray, V: np.ndarray) -> np.ndarray:
        A = np.einsum("...zij,...zjm->...zim", _sphere_basis(p), V)
        A = np.einsum("zij,...zjm->...zim", self.Q, A)
        return _sphere_from_ambient(self.points_to_work(p), A)

    def points_from_work(self, pw: np.ndarray) -> np.ndarray:
        return _sphere_chart(np.einsum("zji,...zj->...zi", self.Q, _sphere_embed(pw)))

    def vectors_from_work(self, pw: np.ndarray, Vw: np.ndarray) -> np.ndarray:
        A = np.einsum("...zij,...zjm->...zim", _sphere_basis(pw), Vw)
        A = np.einsum("zji,...zjm->...zim", self.Q, A)
        return _sphere_from_ambient(self.points_from_work(pw), A)


def sphere_model(radius: float = 1.0, name: Optional[str] = None) -> ManifoldModel:
    """
    Round sphere of the given radius in polar coordinates (theta, phi).

    Geodesic, distance, logarithm and focal shortcuts are closed-form;
    numerical integrations rotate the chart per geodesic.
    """
    if not radius > 0:
        raise ScenarioError(f"Sphere radius must be positive, got {radius}", field="params.radius")
    r = float(radius)
    r2 = r * r

    def metric(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        g = np.zeros(p.shape[:-1] + (2, 2))
        g[..., 0, 0] = r2
        g[..., 1, 1] = r2 * np.sin(p[..., 0]) ** 2
        return g

    def christoffel(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        th = p[..., 0]
        gam = np.zeros(p.shape[:-1] + (2, 2, 2))
        gam[..., 0, 1, 1] = -np.sin(th) * np.cos(th)
        gam[..., 1, 0, 1] = np.cos(th) / np.sin(th)
        gam[..., 1, 1, 0] = gam[..., 1, 0, 1]
        return gam

    def curvature(p: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(p).shape[:-1], 1.0 / r2)

    def dist(p: np.ndarray, q: np.ndarray) -> float:
        return r * _sphere_angle(p, q)

    def log(p: np.ndarray, q: np.ndarray, gap: float = 1e-5, cap: int = 16) -> List[np.ndarray]:
        p = np.asarray(p, dtype=float)
        alpha = _sphere_angle(p, q)
        if alpha < 1e-15:
            return [np.zeros(2)]
        P = _sphere_embed(p)
        basis = _sphere_basis(p)
        if np.pi - alpha <= ANTIPODAL_TOL:
            e1 = basis[:, 0] / np.linalg.norm(basis[:, 0])
            e2 = np.cross(P, e1)
            angles = 2.0 * np.pi * np.arange(cap) / cap
            dirs = np.cos(angles)[:, None] * e1 + np.sin(angles)[:, None] * e2
            comps = _sphere_from_ambient(np.broadcast_to(p, (cap, 2)), (np.pi * dirs)[..., None])
            return [c for c in comps[..., 0]]
        Q = _sphere_embed(np.asarray(q, dtype=float))
        U = (Q - np.cos(alpha) * P) / np.sin(alpha)
        out = [_sphere_from_ambient(p, (alpha * U)[:, None])[:, 0]]
        if r * (2.0 * np.pi - 2.0 * alpha) <= gap:
            out.append(_sphere_from_ambient(p, (-(2.0 * np.pi - alpha) * U)[:, None])[:, 0])
        return out

    def focal(p: np.ndarray, e: np.ndarray) -> float:
        return np.pi * r

    return ManifoldModel(
        name=name or f"sphere_r{radius:g}",
        dim=2,
        chart=ChartSpec((0.0, 0.0), (np.pi, 2.0 * np.pi), (False, True), ("theta", "phi")),
        metric_eval=metric,
        christoffel_eval=christoffel,
        curvature_eval=curvature,
        analytic_exp=_sphere_exp,
        analytic_dist=dist,
        analytic_log=log,
        analytic_focal=focal,
        injectivity_radius=np.pi * r,
        diameter_bound=np.pi * r,
        recenter=SphereRotation,
        declaration={"type": "sphere", "params": {"radius": r}},
    )


# ---------------------------------------------------------------------------
# Flat torus
# ---------------------------------------------------------------------------


def flat_torus_model(period: float = 2.0 * np.pi, name: Optional[str] = None) -> ManifoldModel:
    """Flat square torus R^2 / (L Z)^2 with exact lattice distance."""
    if not period > 0:
        raise ScenarioError(f"Torus period must be positive, got {period}", field="params.period")
    L = float(period)
    shifts = L * np.array([[i, j] for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)

    def metric(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy()

    def christoffel(p: np.ndarray) -> np.ndarray:
        return np.zeros(np.asarray(p).shape[:-1] + (2, 2, 2))

    def curvature(p: np.ndarray) -> np.ndarray:
        return np.zeros(np.asarray(p).shape[:-1])

    def wrap(p: np.ndarray) -> np.ndarray:
        return np.mod(p, L)

    def exp(p: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return wrap(np.asarray(p, dtype=float) + w), np.array(w, dtype=float, copy=True)

    def translates(p: np.ndarray, q: np.ndarray) -> np.ndarray:
        return (wrap(np.asarray(q, dtype=float)) - wrap(np.asarray(p, dtype=float))) + shifts

    def dist(p: np.ndarray, q: np.ndarray) -> float:
        return float(np.min(np.linalg.norm(translates(p, q), axis=-1)))

    def log(p: np.ndarray, q: np.ndarray, gap: float = 1e-5, cap: int = 16) -> List[np.ndarray]:
        cands = translates(p, q)
        lengths = np.linalg.norm(cands, axis=-1)
        order = np.argsort(lengths, kind="stable")
        best = lengths[order[0]]
        return [cands[i] for i in order if lengths[i] <= best + gap][:cap]

    def focal(p: np.ndarray, e: np.ndarray) -> float:
        return math.inf

    return ManifoldModel(
        name=name or "flat_torus",
        dim=2,
        chart=ChartSpec((0.0, 0.0), (L, L), (True, True), ("x", "y")),
        metric_eval=metric,
        christoffel_eval=christoffel,
        curvature_eval=curvature,
        analytic_exp=exp,
        analytic_dist=dist,
        analytic_log=log,
        analytic_focal=focal,
        injectivity_radius=L / 2.0,
        diameter_bound=L * math.sqrt(2.0) / 2.0,
        declaration={"type": "flat_torus", "params": {"period": L}},
    )


# ---------------------------------------------------------------------------
# Surfaces of revolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RevolutionProfile:
    """
    Profile radius r(u) of a surface of revolution.

    ``poly`` coefficients are c0 + c1 u + c2 u^2 + ...; ``fourier``
    coefficients are [c0, a1, b1, a2, b2, ...] for
    c0 + sum a_k cos(k w s) + b_k sin(k w s), s = u - u_min, w = 2 pi / period,
    in which case u is periodic.
    """

    basis: str
    coeffs: Tuple[float, ...]
    u_range: Tuple[float, float]

    @property
    def periodic(self) -> bool:
        return self.basis == "fourier"

    def radius(self, u: np.ndarray, order: int = 0) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.basis == "poly":
            return Polynomial(self.coeffs).deriv(order)(u)

        a, b = self.u_range
        omega = 2.0 * np.pi / (b - a)
        s = u - a
        out = np.full(u.shape, self.coeffs[0] if order == 0 else 0.0)
        rest = list(self.coeffs[1:])
        for k in range(1, (len(rest) + 1) // 2 + 1):
            ak = rest[2 * k - 2]
            bk = rest[2 * k - 1] if 2 * k - 1 < len(rest) else 0.0
            kw = k * omega
            c, sn = np.cos(kw * s), np.sin(kw * s)
            # d^n/ds^n of (a cos + b sin) cycles through four phases
            phase = order % 4
            if phase == 0:
                term = ak * c + bk * sn
            elif phase == 1:
                term = -ak * sn + bk * c
            elif phase == 2:
                term = -ak * c - bk * sn
            else:
                term = ak * sn - bk * c
            out = out + kw**order * term
        return out


def revolution_model(profile: RevolutionProfile, name: Optional[str] = None) -> ManifoldModel:
    """
    Surface of revolution ds^2 = du^2 + r(u)^2 dphi^2.

    Christoffels: Gamma^u_phiphi = -r r', Gamma^phi_uphi = r'/r;
    Gaussian curvature K = -r''/r.
    """
    a, b = profile.u_range
    samples = np.linspace(a, b, PROFILE_SAMPLES)
    radii = profile.radius(samples)
    interior = radii if profile.periodic else radii[1:-1]
    if not np.all(interior > 0):
        raise ScenarioError(
            "Profile radius must be positive on u_range", field="params.coeffs"
        )
    r_max = float(np.max(radii))
    span = b - a
    diameter = (span / 2.0 if profile.periodic else span) + np.pi * r_max

    def metric(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        g = np.zeros(p.shape[:-1] + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = profile.radius(p[..., 0]) ** 2
        return g

    def christoffel(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        r = profile.radius(p[..., 0])
        r1 = profile.radius(p[..., 0], 1)
        gam = np.zeros(p.shape[:-1] + (2, 2, 2))
        gam[..., 0, 1, 1] = -r * r1
        gam[..., 1, 0, 1] = r1 / r
        gam[..., 1, 1, 0] = r1 / r
        return gam

    def curvature(p: np.ndarray) -> np.ndarray:
        u = np.asarray(p, dtype=float)[..., 0]
        return -profile.radius(u, 2) / profile.radius(u)

    return ManifoldModel(
        name=name or "revolution",
        dim=2,
        chart=ChartSpec((a, 0.0), (b, 2.0 * np.pi), (profile.periodic, True), ("u", "phi")),
        metric_eval=metric,
        christoffel_eval=christoffel,
        curvature_eval=curvature,
        diameter_bound=float(diameter),
        declaration={
            "type": "revolution",
            "params": {
                "basis": profile.basis,
                "coeffs": list(profile.coeffs),
                "u_range": [a, b],
            },
        },
    )


# ---------------------------------------------------------------------------
# Declarations
# ---------------------------------------------------------------------------

BUILTIN_DECLARATIONS: Dict[str, ManifoldDeclaration] = {
    "sphere_r1": {"type": "sphere", "params": {"radius": 1.0}},
    "sphere_r2": {"type": "sphere", "params": {"radius": 2.0}},
    "torus_2pi": {"type": "flat_torus", "params": {"period": 2.0 * math.pi}},
    "dumbbell": {
        "type": "revolution",
        "params": {"basis": "fourier", "coeffs": [1.0, 0.6], "u_range": [0.0, 2.0 * math.pi]},
    },
    "oblate": {
        "type": "revolution",
        "params": {"basis": "poly", "coeffs": [1.5, 0.0, -0.6], "u_range": [-1.2, 1.2]},
    },
}


def builtin_names() -> List[str]:
    """Names accepted by load_manifold in place of a declaration."""
    return sorted(BUILTIN_DECLARATIONS)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def validate_declaration(declaration: Any) -> List[Diagnostic]:
    """
    Check a manifold declaration without building the model.

    Returns:
        List of diagnostics; empty when the declaration is valid
    """
    diags: List[Diagnostic] = []
    if not isinstance(declaration, dict):
        return [{"field": "manifold", "code": "TYPE", "message": "Declaration must be an object"}]

    kind = declaration.get("type")
    if kind not in MANIFOLD_TYPES:
        valid = ", ".join(MANIFOLD_TYPES)
        return [
            {
                "field": "manifold.type",
                "code": "ENUM",
                "message": f"Unknown manifold type {kind!r}; valid types: {valid}",
            }
        ]

    params = declaration.get("params", {})
    if not isinstance(params, dict):
        return [{"field": "manifold.params", "code": "TYPE", "message": "params must be an object"}]

    def positive(key: str) -> None:
        value = params.get(key)
        if not _is_number(value) or not value > 0:
            diags.append(
                {
                    "field": f"manifold.params.{key}",
                    "code": "RANGE",
                    "message": f"{key} must be a positive number, got {value!r}",
                }
            )

    if kind == "sphere":
        positive("radius")
    elif kind == "flat_torus":
        positive("period")
    else:
        basis = params.get("basis")
        if basis not in PROFILE_BASES:
            diags.append(
                {
                    "field": "manifold.params.basis",
                    "code": "ENUM",
                    "message": f"Unknown basis {basis!r}; valid bases: {', '.join(PROFILE_BASES)}",
                }
            )
        coeffs = params.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs or not all(_is_number(c) for c in coeffs):
            diags.append(
                {
                    "field": "manifold.params.coeffs",
                    "code": "TYPE",
                    "message": "coeffs must be a non-empty list of numbers",
                }
            )
        u_range = params.get("u_range")
        if (
            not isinstance(u_range, list)
            or len(u_range) != 2
            or not all(_is_number(u) for u in u_range)
            or not u_range[0] < u_range[1]
        ):
            diags.append(
                {
                    "field": "manifold.params.u_range",
                    "code": "RANGE",
                    "message": "u_range must be [a, b] with a < b",
                }
            )
        if not diags:
            profile = RevolutionProfile(basis, tuple(float(c) for c in coeffs), (float(u_range[0]), float(u_range[1])))
            radii = profile.radius(np.linspace(u_range[0], u_range[1], PROFILE_SAMPLES))
            interior = radii if profile.periodic else radii[1:-1]
            if not np.all(interior > 0):
                diags.append(
                    {
                        "field": "manifold.params.coeffs",
                        "code": "RANGE",
                        "message": "profile radius must be positive on u_range",
                    }
                )
    return diags


def model_from_declaration(declaration: ManifoldDeclaration, name: Optional[str] = None) -> ManifoldModel:
    """
    Build a model from a declaration.

    Raises:
        ScenarioError: If the declaration is invalid (naming the field)
    """
    diags = validate_declaration(declaration)
    if diags:
        raise ScenarioError(diags[0]["message"], field=diags[0]["field"])

    params = declaration.get("params", {})
    kind = declaration["type"]
    if kind == "sphere":
        return sphere_model(float(params["radius"]), name=name)
    if kind == "flat_torus":
        return flat_torus_model(float(params["period"]), name=name)
    u_range = params["u_range"]
    profile = RevolutionProfile(
        params["basis"],
        tuple(float(c) for c in params["coeffs"]),
        (float(u_range[0]), float(u_range[1])),
    )
    return revolution_model(profile, name=name)


def load_manifold(spec: Union[str, Path, Dict[str, Any]]) -> ManifoldModel:
    """
    Load a manifold from a built-in name, a declaration file, or a declaration.

    Args:
        spec: Built-in name (see builtin_names()), path to a JSON declaration,
            or a declaration dict

    Returns:
        ManifoldModel

    Raises:
        ScenarioError: If the name is unknown or the declaration invalid

    Example:
        >>> model = load_manifold("torus_2pi")
        >>> model.dim
        2
    """
    if isinstance(spec, dict):
        return model_from_declaration(spec)  # type: ignore[arg-type]

    text = str(spec)
    if text in BUILTIN_DECLARATIONS:
        return model_from_declaration(BUILTIN_DECLARATIONS[text], name=text)

    path = Path(text)
    if path.suffix == ".json" or path.exists():
        try:
            with open(path, "r") as f:
                declaration = json.load(f)
        except json.JSONDecodeError as e:
            raise ScenarioError(
                f"Malformed manifold declaration {path}: {e.msg}", field="manifold", line=e.lineno
            ) from e
        logger.info(f"Loaded manifold declaration from {path}")
        return model_from_declaration(declaration, name=path.stem)

    valid = ", ".join(builtin_names())
    raise ScenarioError(
        f"Unknown manifold {text!r}; built-in names: {valid}", field="manifold"
    )
