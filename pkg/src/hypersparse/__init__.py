"""Sparse training with Adaptive Regularized Training and the HyperSparse loss."""

__version__ = "0.1.0"
