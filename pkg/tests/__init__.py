"""
Test configuration and fixtures for mtwgeo.

This module provides shared test utilities and configuration.
"""

# Import shared test data for easy access
from .test_data import (
    SPHERE,
    SPHERE_R2,
    TORUS,
    DUMBBELL,
    OBLATE,
    SPHERE_EQUATOR,
    TORUS_ORIGIN,
    TORUS_CENTER,
    VALID_DECLARATIONS,
    INVALID_DECLARATIONS,
    SAMPLE_SCENARIO,
    star_domain,
)

__all__ = [
    "SPHERE",
    "SPHERE_R2",
    "TORUS",
    "DUMBBELL",
    "OBLATE",
    "SPHERE_EQUATOR",
    "TORUS_ORIGIN",
    "TORUS_CENTER",
    "VALID_DECLARATIONS",
    "INVALID_DECLARATIONS",
    "SAMPLE_SCENARIO",
    "star_domain",
]
