"""Jacobi tests package."""
