"""Numerical laboratory for the resonant weighted nonlocal Schrodinger equation."""

__version__ = "0.1.0"
