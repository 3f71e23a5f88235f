"""Degenerate billiards, singular perturbations and shadowing of collision chains."""

__version__ = "0.1.0"
