"""Convexity tests package."""
