"""Numerical laboratory for gamma-space maximal regularity."""
__version__ = "0.1.0"
