"""Exception types raised across the package."""


class IonCoolError(Exception):
    """Base class for all package errors."""


class InvalidInputError(IonCoolError, ValueError):
    pass


class ConvergenceError(IonCoolError):
    """An iterative solver ran out of budget.

    ``residual`` carries the last residual and ``best`` the best-so-far
    solution, when there is one.
    """

    def __init__(self, message, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class DivergenceError(IonCoolError):
    pass


class InstabilityError(IonCoolError):
    pass


class DegeneracyError(IonCoolError):
    pass


class SingularTermError(IonCoolError):
    pass


class NoSteadyStateError(IonCoolError):
    pass


class NotRelaxedError(IonCoolError):
    def __init__(self, message, discrepancy=None):
        super().__init__(message)
        self.discrepancy = discrepancy


class ConfigError(InvalidInputError):
    """A run configuration is malformed or inconsistent."""
