"""
Configuration management for the mtwgeo package.

This module holds the worker-pool size used by the data-parallel scans and the
numeric defaults (integration steps, tolerances, finite-difference steps) that
operations fall back to when no explicit value is passed.
"""

import logging
import os
from typing import Any, Dict, Optional, Union

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "MTWGEO_THREADS"

BISM_READINGS = ("literal", "corrected")

DEFAULT_SETTINGS: Dict[str, Union[int, float, str]] = {
    "ode_step": 1e-3,
    "shooting_step": 1e-2,
    "shooting_directions": 720,
    "christoffel_step": 1e-5,
    "guard_margin": 1e-3,
    "bisection_tol": 1e-8,
    "predicate_slack": 1e-7,
    "multiplicity_cap": 16,
    "mtw_step": 1e-2,
    "mtw_noise_floor": 5e-3,
    "newton_tol": 1e-12,
    "newton_substeps": 8,
    "bism_reading": "literal",
}

_INTEGER_SETTINGS = {"shooting_directions", "multiplicity_cap", "newton_substeps"}

# Global configuration
_worker_count: Optional[int] = None
_settings: Dict[str, Union[int, float, str]] = dict(DEFAULT_SETTINGS)


def _parse_worker_count(value: Any) -> int:
    try:
        count = int(value)
    except (TypeError, ValueError) as e:
        raise ValueError(f"Invalid worker count: {value!r} is not an integer") from e
    if isinstance(value, float) and value != count:
        raise ValueError(f"Invalid worker count: {value!r} is not an integer")
    if count < 1:
        raise ValueError(f"Invalid worker count: {count} (must be >= 1)")
    return count


def set_worker_count(count: int) -> None:
    """
    Set the number of workers used for data-parallel grids.

    Args:
        count: Positive number of worker threads

    Raises:
        ValueError: If count is not a positive integer

    Example:
        >>> from mtwgeo.config import set_worker_count
        >>> set_worker_count(4)
    """
    global _worker_count
    _worker_count = _parse_worker_count(count)


def get_worker_count() -> int:
    """
    Get the configured worker count.

    Checks in order:
    1. Count set via set_worker_count()
    2. MTWGEO_THREADS environment variable
    3. Available CPU count

    Returns:
        int: Number of workers (always >= 1)
    """
    if _worker_count:
        return _worker_count

    env_threads = os.getenv(THREADS_ENV_VAR)
    if env_threads:
        try:
            return _parse_worker_count(env_threads)
        except ValueError:
            logger.warning(
                f"Ignoring invalid {THREADS_ENV_VAR}={env_threads!r}, "
                "using available parallelism"
            )

    return os.cpu_count() or 1


def clear_worker_count() -> None:
    """Clear the configured worker count."""
    global _worker_count
    _worker_count = None


def set_setting(name: str, value: Union[int, float, str]) -> None:
    """
    Override one numeric default.

    Args:
        name: Setting name, one of DEFAULT_SETTINGS
        value: New value; numeric settings must be positive

    Raises:
        ValueError: If the name is unknown or the value out of range
    """
    if name not in DEFAULT_SETTINGS:
        valid = ", ".join(sorted(DEFAULT_SETTINGS))
        raise ValueError(f"Unknown setting '{name}'. Valid settings: {valid}")

    if name == "bism_reading":
        if value not in BISM_READINGS:
            raise ValueError(
                f"Invalid bism_reading {value!r}: expected one of {BISM_READINGS}"
            )
        _settings[name] = value
        return

    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"Setting '{name}' must be numeric, got {value!r}")
    if not value > 0:
        raise ValueError(f"Setting '{name}' must be positive, got {value}")
    if name in _INTEGER_SETTINGS:
        if int(value) != value:
            raise ValueError(f"Setting '{name}' must be an integer, got {value}")
        value = int(value)
    _settings[name] = value


def get_setting(name: str) -> Any:
    """Return the current value of a setting."""
    if name not in _settings:
        raise ValueError(f"Unknown setting '{name}'")
    return _settings[name]


def get_settings() -> Dict[str, Union[int, float, str]]:
    """Return a copy of all current settings."""
    return dict(_settings)


def reset_settings() -> None:
    """Restore every setting to its default."""
    _settings.clear()
    _settings.update(DEFAULT_SETTINGS)
