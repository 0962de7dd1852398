"""Exception hierarchy shared by all emdenlab modules."""


class EmdenLabError(Exception):
    """Base class for every error raised by this package."""


class InputError(EmdenLabError, ValueError):
    """Malformed arguments: wrong dimensions, bad tolerances, bad ranges."""


class DomainError(EmdenLabError, ValueError):
    """A scale factor is nonpositive where the equations are singular."""


class BoundaryError(EmdenLabError, ValueError):
    """A point (or stencil) touches the vacuum boundary of a compact profile."""


class UnsupportedRegimeError(EmdenLabError):
    """The requested quantity is not defined for these parameters."""


class ConfigurationError(EmdenLabError):
    """Inconsistent solver or workflow configuration."""


class NumericalBreakdown(EmdenLabError, ArithmeticError):
    """Non-finite values or step-size collapse inside a numerical scheme."""

    def __init__(self, message, *, index=None):
        super().__init__(message)
        self.index = index
