"""Exception types shared across the package."""


class VvlimError(Exception):
    """Base class for package errors."""


class InvalidInputError(VvlimError):
    """Bad arguments or violated preconditions."""


class ConvergenceError(VvlimError):
    """An iterative solver (Picard, Newton, ODE) failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnsupportedCaseError(VvlimError):
    """Structurally valid input outside the implemented constructions.

    Raised e.g. for defective eigen-problems or for singular-viscosity
    curves whose reduced block loses rank along the family.
    """
