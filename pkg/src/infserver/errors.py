"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class UsageError(ValueError):
    """Operands are individually valid but cannot be combined."""


class NumericalFailure(ArithmeticError):
    """A computed distribution is not a valid probability vector."""


class DivergenceError(ArithmeticError):
    """The requested stationary quantity does not exist.

    ``evidence`` holds whatever the stability analysis produced
    (normally a :class:`~infserver.stability.StabilityVerdict`).
    """

    def __init__(self, message, evidence=None):
        super().__init__(message)
        self.evidence = evidence
