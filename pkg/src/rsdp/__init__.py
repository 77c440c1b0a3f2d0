"""Simulation and verification of regime-switching diffusions with state-dependent switching."""

__version__ = "0.1.0"
