"""Pareto-optimal frequency-modulated pulses for a driven qutrit."""

__version__ = "0.1.0"
