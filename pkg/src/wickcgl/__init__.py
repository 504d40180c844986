"""Wick-renormalised stochastic complex Ginzburg-Landau dynamics on the 2D torus."""
__version__ = "0.1.0"
