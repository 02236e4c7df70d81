"""Decoherence and dissipation timescales of a bosonic mode in an oscillator bath."""

__version__ = "0.1.0"
