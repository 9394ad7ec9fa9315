"""Deterministic, randomized and simulated quantum algorithms for summation and integration."""

__version__ = "0.1.0"
