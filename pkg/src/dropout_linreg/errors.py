"""Exception types raised across the package."""


class DropoutLinregError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(DropoutLinregError, ValueError):
    pass


class InvalidProbability(DropoutLinregError, ValueError):
    pass


class NotSymmetric(DropoutLinregError, ValueError):
    pass


class NotPositiveDefinite(DropoutLinregError, ValueError):
    pass


class NotInvertible(DropoutLinregError, ValueError):
    pass


class NotReducedForm(DropoutLinregError, ValueError):
    """The design has a zero column, so some diagonal entry of X^T X vanishes."""


class UnequalColumnNorms(DropoutLinregError, ValueError):
    pass


class NoConvergence(DropoutLinregError, ArithmeticError):
    pass


class BudgetExceeded(DropoutLinregError, ValueError):
    """An exhaustive enumeration would exceed the configured budget."""


class StepSizeViolation(DropoutLinregError, ValueError):
    """The learning rate breaks a hard stability gate."""


class HypothesisViolated(DropoutLinregError, ValueError):
    """A theorem-level hypothesis does not hold for the given inputs."""


class TheoremGateWarning(UserWarning):
    """Raised as a warning when only the stronger covariance-theorem gate fails."""
