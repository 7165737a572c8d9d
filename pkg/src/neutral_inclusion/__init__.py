"""Numerical laboratory for neutral coated inclusions in three dimensions."""

__version__ = "0.1.0"
