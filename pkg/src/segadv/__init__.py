"""Segmental advantage estimation for sparse-reward sequence policies."""

__version__ = "0.1.0"
