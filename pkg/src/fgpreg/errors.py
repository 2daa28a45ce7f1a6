"""Exception types shared across the package."""


class FgpregError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FgpregError):
    """Raised when arguments violate a documented precondition."""


class NumericalFailureError(FgpregError):
    """Raised when a factorization or solve cannot be completed."""


class OptimizationFailureError(FgpregError):
    """Raised when no feasible hyperparameter value was found."""
