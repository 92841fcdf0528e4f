"""Numerical laboratory for the variable-coefficient 1-D Kuramoto-Sivashinsky
equation: forward solvers, Carleman-weight diagnostics, and recovery of the
anti-diffusion coefficient from boundary traces plus one interior snapshot."""

__version__ = "0.1.0"
