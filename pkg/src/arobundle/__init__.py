"""Multistage adaptive robust optimization by state-only affine rules."""

__version__ = "0.1.0"
