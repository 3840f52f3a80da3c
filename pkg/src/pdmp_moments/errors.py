"""Exception hierarchy.

The CLI maps these onto exit codes: input problems -> 2, infeasible
(unstable) models -> 3, numerical failures -> 4.
"""


class PDMPError(Exception):
    """Base class for every error raised by this package."""


class InputError(PDMPError, ValueError):
    """Malformed input: bad parameters, bad model files, violated preconditions."""


class ModelError(InputError):
    """A model failed validation. ``report`` holds the full violation list."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DomainError(InputError):
    """A function was evaluated outside its domain."""


class InfeasibleError(PDMPError):
    """Stationary moments do not exist (spectral radius >= 1)."""

    def __init__(self, message, spectral_radius=None):
        super().__init__(message)
        self.spectral_radius = spectral_radius


class NumericalError(PDMPError, ArithmeticError):
    """A numerical kernel failed to deliver a trustworthy result."""


class LinalgOverflowError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class QuadratureError(NumericalError):
    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class DivergenceError(NumericalError):
    pass


class InconsistencyError(NumericalError):
    pass


class SimulationError(NumericalError):
    """Simulation produced a non-finite state. ``prefix`` holds what was computed."""

    def __init__(self, message, prefix=None):
        super().__init__(message)
        self.prefix = prefix


class ConditioningWarning(RuntimeWarning):
    pass
