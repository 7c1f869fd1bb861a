"""Simulation and verification tools for non-local quantum computation."""

__version__ = "0.1.0"
