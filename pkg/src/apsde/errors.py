"""Exception types shared across the package."""


class ApsdeError(Exception):
    pass


class InvalidInputError(ApsdeError, ValueError):
    """Raised when arguments fail validation (shapes, ranges, schemas)."""


class NumericError(ApsdeError, ArithmeticError):
    """Raised when an evaluation produces a non-finite value."""


class IntegrationOverflowError(NumericError):
    """Raised when a simulated path leaves the finite range.

    Carries the offending path index and integration step.
    """

    def __init__(self, message, path=None, step=None):
        super().__init__(message)
        self.path = path
        self.step = step
