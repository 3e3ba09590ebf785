"""Maximally localized generalized Wannier states and Hubbard parameters for optical lattices."""

__version__ = "0.1.0"
