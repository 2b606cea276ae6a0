"""Deterministic SINR broadcast simulator."""

__version__ = "0.1.0"
