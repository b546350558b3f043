"""Discrete Radon reconstruction of functions with rough edges: a numerical laboratory."""

__version__ = "0.1.0"
