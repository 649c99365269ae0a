"""Finite-volume solver and a priori lifespan estimates for a regularized Li-ion cell model."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
