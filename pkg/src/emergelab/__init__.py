"""Numerical laboratory for the quantum and gravitational descriptions of learning dynamics."""

__version__ = "0.1.0"
