"""Watertight interpolating surface reconstruction from unoriented points."""

__version__ = "0.1.0"
