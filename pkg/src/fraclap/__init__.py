"""Numerical laboratory for anti-symmetric solutions of fractional Laplacian equations."""

__version__ = "0.1.0"
