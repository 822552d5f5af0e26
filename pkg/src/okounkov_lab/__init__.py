"""Okounkov bodies, Chebyshev transforms and the toric model of d_p geometry."""

__version__ = "0.1.0"
