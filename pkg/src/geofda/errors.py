"""Exception hierarchy.

``ValidationError`` covers bad inputs (CLI exit code 2); ``NumericalError``
and its subclasses cover failures inside a computation (exit code 3).
"""


class GeofdaError(Exception):
    pass


class ValidationError(GeofdaError, ValueError):
    pass


class DomainError(ValidationError):
    """A point lies outside the domain of a basis or mesh."""


class NumericalError(GeofdaError, ArithmeticError):
    pass


class RankError(NumericalError):
    """A normal or design matrix is singular or rank deficient."""


class SingularSystemError(NumericalError):
    """A kriging or Lagrange system cannot be solved."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class FitError(NumericalError):
    """Variogram fitting produced no finite solution."""
