"""Exact stationary moments and event-exact simulation for linear PDMPs.

A piecewise-deterministic Markov process here has linear flow between
events, any number of Poisson-timed affine resets, and one renewal-timed
random reset whose waiting time follows an arbitrary law.
"""
__version__ = "0.1.0"

from .distributions import (  # noqa: E402
    Deterministic,
    Exponential,
    Gamma,
    LogNormal,
    Tabulated,
    Weibull,
    from_dict,
)
from .errors import (  # noqa: E402
    InfeasibleError,
    InputError,
    ModelError,
    NumericalError,
    PDMPError,
)
from .model import (  # noqa: E402
    GeneralResetFamily,
    LinearDynamics,
    PDMPModel,
    PoissonResetFamily,
    validate,
)
from .solver import check_stability, solve, stationary_mean, stationary_second  # noqa: E402

__all__ = [
    "__version__",
    "Deterministic", "Exponential", "Gamma", "LogNormal", "Tabulated", "Weibull", "from_dict",
    "PDMPError", "InputError", "ModelError", "InfeasibleError", "NumericalError",
    "LinearDynamics", "PoissonResetFamily", "GeneralResetFamily", "PDMPModel", "validate",
    "check_stability", "solve", "stationary_mean", "stationary_second",
]
