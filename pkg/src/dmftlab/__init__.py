"""Numerical DMFT laboratory for gradient-flow training of two-layer networks."""
__version__ = "0.1.0"
