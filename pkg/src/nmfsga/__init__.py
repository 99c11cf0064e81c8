"""Noise-aware multi-objective feature selection (NMFS-GA)."""

__version__ = "0.1.0"
