"""Leaf-area prediction and drought-response parameter estimation."""

__version__ = "0.1.0"
