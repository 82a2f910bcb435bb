"""Robust path recommendations for transit disruptions under uncertain demand."""

from .simulator._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
