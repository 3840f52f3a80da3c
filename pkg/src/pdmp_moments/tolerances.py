"""Numerical constants shared by every module.

Defaults can be overridden per call (most functions take ``tol=``) or globally
through the CLI ``--tol`` flag, which builds a replacement record.
"""
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    # algebraic kernels (identities, symmetry, lift consistency)
    algebraic_rtol: float = 1e-10
    # adaptive quadrature, absolute and relative
    quad_atol: float = 1e-10
    quad_rtol: float = 1e-10
    # support truncation: integrate f on [0, quantile(1 - tail_mass)]
    tail_mass: float = 1e-12
    # stability: stable iff spectral radius < 1 - margin
    stability_margin: float = 1e-9
    # sf below this is treated as "beyond the support"
    survival_floor: float = 1e-290
    # cond(M) above this routes tau-expectations away from M^{-1}
    inverse_cond_max: float = 1e6
    # warn when (I - J<e^{AT}>) is this badly conditioned
    cond_warn: float = 1e10
    # first-order mean vs the mean block of the second-order solution
    mean_crosscheck_rtol: float = 1e-6
    # case-study formulas switch to the moment-series branch below this gamma*<T>
    small_gamma_switch: float = 1e-4
    # CV^2 is reported only where |mean| exceeds this times the state scale
    cv2_mean_floor: float = 1e-12


DEFAULT = Tolerances()


def with_quad_tol(tol, base=DEFAULT):
    """Return ``base`` with both quadrature tolerances set to ``tol``."""
    if tol is None:
        return base
    return replace(base, quad_atol=float(tol), quad_rtol=float(tol))
