"""Poisson bracket invariants of covers of triangulated surfaces."""
__version__ = "0.1.0"
