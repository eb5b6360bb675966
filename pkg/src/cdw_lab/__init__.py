"""Charge density wave transport simulations."""

__version__ = "0.1.0"
