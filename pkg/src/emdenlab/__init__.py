"""Exact self-similar flows with elliptic symmetry: construction, Emden
dynamics, residual verification and a finite-volume cross-check."""

from .errors import (BoundaryError, ConfigurationError, DomainError, EmdenLabError,
                     InputError, NumericalBreakdown, UnsupportedRegimeError)
from .params import EmdenState, ModelParams

__version__ = "0.1.0"

__all__ = [
    "BoundaryError", "ConfigurationError", "DomainError", "EmdenLabError", "EmdenState",
    "InputError", "ModelParams", "NumericalBreakdown", "UnsupportedRegimeError",
]
