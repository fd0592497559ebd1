"""
Utility functions for the mtwgeo package.

This module contains the numerical building blocks shared across the package:
the batched fixed-step Runge-Kutta integrator, Richardson extrapolation,
orthonormal frames, the ordered worker-pool map, and the JSON/CSV writers used
for reports and traces.
"""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# Integration status codes, one per batch row
STATUS_OK = 0
STATUS_CHART_EXIT = 1
STATUS_NON_FINITE = 2

JSON_FLOAT_DIGITS = 12


def rk4_integrate(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    h: Any,
    n_steps: int,
    record: bool = False,
    guard: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate a batch of first-order systems with classical fixed-step RK4.

    Rows that leave the guarded chart or turn non-finite are frozen at their
    last valid state and marked in the returned status array.

    Args:
        rhs: Vectorized right-hand side mapping (B, m) states to (B, m) rates
        y0: Initial states, shape (B, m)
        h: Step size, scalar or one value per row
        n_steps: Number of steps
        record: Keep every intermediate state
        guard: Optional map from (B, m) states to a boolean "outside" mask

    Returns:
        Tuple of (states, status). states has shape (n_steps + 1, B, m) when
        record is set and (2, B, m) otherwise (initial and final).
    """
    y = np.array(y0, dtype=float, copy=True)
    batch = y.shape[0]
    step = np.broadcast_to(np.asarray(h, dtype=float), (batch,))[:, None]
    status = np.full(batch, STATUS_OK, dtype=int)

    if record:
        history = np.empty((n_steps + 1,) + y.shape)
        history[0] = y
    else:
        history = np.empty((2,) + y.shape)
        history[0] = y

    for k in range(n_steps):
        active = status == STATUS_OK
        if not active.any():
            if record:
                history[k + 1 :] = y
            break

        ya = y[active]
        ha = step[active]
        with np.errstate(all="ignore"):
            k1 = rhs(ya)
            k2 = rhs(ya + 0.5 * ha * k1)
            k3 = rhs(ya + 0.5 * ha * k2)
            k4 = rhs(ya + ha * k3)
            y_new = ya + (ha / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        bad = ~np.all(np.isfinite(y_new), axis=1)
        outside = guard(y_new) if guard is not None else np.zeros(len(ya), bool)
        outside = np.asarray(outside, dtype=bool) & ~bad

        idx = np.flatnonzero(active)
        status[idx[bad]] = STATUS_NON_FINITE
        status[idx[outside]] = STATUS_CHART_EXIT
        keep = ~(bad | outside)
        y[idx[keep]] = y_new[keep]

        if record:
            history[k + 1] = y

    if not record:
        history[1] = y
    return history, status


def richardson(coarse: float, fine: float, order: int = 2) -> Tuple[float, float]:
    """
    Extrapolate two estimates taken at steps h and h/2.

    Returns:
        Tuple of (extrapolated value, error estimate of the fine value)
    """
    factor = 2.0**order
    diff = fine - coarse
    return fine + diff / (factor - 1.0), abs(diff) / (factor - 1.0)


def orthonormal_frame(metric: np.ndarray, first: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Gram-Schmidt the chart basis with respect to a metric.

    Args:
        metric: Symmetric positive-definite (n, n) matrix
        first: Optional vector that becomes the first frame direction

    Returns:
        (n, n) array whose columns are g-orthonormal
    """
    n = metric.shape[0]
    candidates: List[np.ndarray] = []
    if first is not None:
        candidates.append(np.asarray(first, dtype=float))
    candidates.extend(np.eye(n))

    columns: List[np.ndarray] = []
    for vec in candidates:
        w = vec.astype(float).copy()
        for e in columns:
            w = w - (e @ metric @ w) * e
        norm_sq = w @ metric @ w
        if norm_sq > 1e-20 * max(1.0, float(vec @ metric @ vec)):
            columns.append(w / math.sqrt(norm_sq))
        if len(columns) == n:
            break
    return np.stack(columns, axis=1)


def angle_grid(n: int) -> np.ndarray:
    """Uniform angles 2*pi*k/n for k = 0..n-1."""
    return 2.0 * np.pi * np.arange(n) / n


def parallel_map(
    fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None
) -> List[R]:
    """
    Apply fn to every item on a thread pool, returning results in input order.

    Args:
        fn: Function to apply
        items: Inputs
        workers: Pool size; defaults to config.get_worker_count()

    Returns:
        List of results, one per item, in the order of items
    """
    from ..config import get_worker_count

    count = workers or get_worker_count()
    if count <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=min(count, len(items))) as pool:
        return list(pool.map(fn, items))


def to_jsonable(obj: Any) -> Any:
    """
    Convert numpy values, dataclass reports and non-finite floats to JSON data.

    Infinite values become the strings "inf"/"-inf"; NaN becomes None.
    """
    if hasattr(obj, "to_dict") and callable(obj.to_dict):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return round(value, JSON_FLOAT_DIGITS)
    return obj


def write_json(path: Path, payload: Any) -> None:
    """Write a report as sorted, indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(to_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote {path}")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Write rows under a fixed header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])
    logger.info(f"Wrote {path}")


def _format_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def parse_vector(text: str) -> np.ndarray:
    """
    Parse a comma-separated vector such as "0,1.5".

    Raises:
        ValueError: If any component is not a number
    """
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ValueError(f"Empty vector: {text!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as e:
        raise ValueError(f"Invalid vector {text!r}: {e}") from e
