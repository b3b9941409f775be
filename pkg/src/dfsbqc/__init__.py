"""Simulation and analysis of blind delegated rotated-qubit preparation over a collective-noise photonic channel."""

__version__ = "0.1.0"
