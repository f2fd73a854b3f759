"""Functional quantization based stratified sampling for Gaussian path functionals."""

__version__ = "0.1.0"
