"""Decoupled HTC training pipeline: synthetic per-face HTC fields, GA/RBF
optimal node subsets, characteristic diagrams, static load balancing, and a
profiled parallel executor."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
