"""Optimal stopping boundaries for geometric Brownian motion via Riesz
representation of the value function."""

__version__ = "0.1.0"
