"""Manifold tests package."""
