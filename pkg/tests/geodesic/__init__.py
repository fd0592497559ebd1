"""Geodesic tests package."""
