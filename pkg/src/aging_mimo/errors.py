"""Exception hierarchy shared by all modules.

The CLI maps :class:`NumericalError` subclasses to exit status 3 and
:class:`ScenarioError` to exit status 2.
"""


class AgingMimoError(Exception):
    """Base class for package errors."""


class ScenarioError(AgingMimoError, ValueError):
    """Invalid scenario description or configuration."""


class NumericalError(AgingMimoError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class IntegrationError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance."""


class SingularNormalizationError(NumericalError):
    """A correlation normalizer has eigenvalues below the floor."""


class SingularSystemError(NumericalError):
    """A linear system is numerically singular."""


class ConvergenceError(NumericalError):
    """An iteration stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
