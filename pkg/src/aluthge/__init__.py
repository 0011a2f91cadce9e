"""Aluthge transforms, their iteration to a normal limit, and the spectral machinery around it."""

__version__ = "0.1.0"
