"""Splitting-time diagnostics for stochastic interpolant flows in 2D."""

__version__ = "0.1.0"
