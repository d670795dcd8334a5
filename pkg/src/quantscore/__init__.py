"""Composite efficiency scoring, simulated PTQ and mixed-precision search for small CNNs."""

__version__ = "0.1.0"
