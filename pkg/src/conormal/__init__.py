"""Spectral first-order-system solver for div A grad u = 0 on the unit disk."""

__version__ = "0.1.0"
