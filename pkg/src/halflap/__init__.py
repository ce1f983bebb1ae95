"""Pseudo-spectral toolkit for critical exponential problems driven by the half-Laplacian on the line."""

__version__ = "0.1.0"
