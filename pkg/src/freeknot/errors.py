"""Exception types raised across the package."""


class FreeKnotError(Exception):
    """Base class for all package errors."""


class InvalidKnotArityError(FreeKnotError, ValueError):
    """A knot vector is too short for the requested operation."""


class OutOfRangeError(FreeKnotError, ValueError):
    """A value lies outside the admissible interval."""


class DistributionalValueError(FreeKnotError, ValueError):
    """Pointwise evaluation of a measure-valued (Dirac) quantity was requested."""


class DerivativeOrderError(FreeKnotError, ValueError):
    """A derivative order exceeds what the degree supports."""


class CapabilityError(FreeKnotError):
    """The requested configuration is not supported by the available formulas."""


class NondifferentiableConfigurationError(FreeKnotError):
    """Knot derivatives do not exist for this form and patch configuration."""


class DimensionMismatchError(FreeKnotError, ValueError):
    """Array lengths do not match the space layout."""


class InfeasibleConstraintsError(FreeKnotError):
    """The constraint system admits no point, or the start point violates it."""


class ProjectionError(FreeKnotError):
    """The projection onto the feasible set failed."""


class DivergenceError(FreeKnotError, ArithmeticError):
    """An iterative solver produced non-finite values."""
