"""Permutation-based graphical tests of independence."""

__version__ = "0.1.0"
