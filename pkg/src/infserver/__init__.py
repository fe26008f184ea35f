"""Infinite-server queues fed by Poisson batches of fractional power-law size."""

from .dist import Deterministic, ExpSojourn, FracPowerLaw
from .errors import DivergenceError, DomainError, NumericalFailure, UsageError

__all__ = [
    "Deterministic",
    "DivergenceError",
    "DomainError",
    "ExpSojourn",
    "FracPowerLaw",
    "NumericalFailure",
    "UsageError",
]

__version__ = "0.1.0"
