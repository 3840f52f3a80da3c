"""Exact stationary first and second moments.

Both orders share one evaluation pipeline for an affine system
dy/dt = a + A y with renewal resets y -> J y + R (in mean):

    y0   = (I - J <e^{A T}>)^{-1} (R + J <int_0^T e^{A s} a ds>)
    <y>  = <e^{A tau}> y0 + <int_0^tau e^{A s} a ds>

where <.> over T uses the inter-event law and over tau the stationary timer
law. Order one runs it on (A_bar, a_bar); order two on the lifted
mu = [x; vec(x x^T)] system.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from . import distributions as dists
from . import tolerances
from .errors import ConditioningWarning, InconsistencyError, InfeasibleError, InputError
from .linalg import augmented, flow_with_integral, spectral_radius, unvec
from .model import PDMPModel, effective_matrices, ensure_valid, lift_second_order


@dataclass(frozen=True)
class StabilityReport:
    order: int
    spectral_radius: float
    stable: bool
    matrix_checked: str
    # order 2 only: radius of the vec(x x^T) diagonal block, for diagnostics
    block_spectral_radius: float | None = None

    def to_dict(self):
        d = {"order": self.order, "spectral_radius": self.spectral_radius, "stable": self.stable,
             "matrix_checked": self.matrix_checked}
        if self.block_spectral_radius is not None:
            d["block_spectral_radius"] = self.block_spectral_radius
        return d


@dataclass(frozen=True, eq=False)
class MomentSolution:
    mean: np.ndarray
    stability: tuple
    numerical_error_estimate: float
    condition_number: float
    second_moment: np.ndarray | None = None
    covariance: np.ndarray | None = None
    cv2: np.ndarray | None = None  # NaN where the mean is too close to zero

    @property
    def order(self):
        return 1 if self.second_moment is None else 2


@dataclass(frozen=True, eq=False)
class ConditionalMeanCurve:
    tau: np.ndarray
    conditional_mean: np.ndarray  # shape (len(tau), n)
    initial: np.ndarray
    mean: np.ndarray


@dataclass(frozen=True)
class _AffineTerms:
    ET_aug: np.ndarray    # <exp([[A, a], [0, 0]] T)>
    Etau_aug: np.ndarray  # same over tau
    err_T: float
    err_tau: float


def _affine_terms(A, a, dist, tol):
    """Expectations of the augmented flow over T and over tau.

    The top-left block gives <e^{A T}>, the last column the forcing integral,
    so one matrix expectation covers two terms of the stationary formula.
    """
    M = augmented(A, a)
    ET = dists.expect_matrix_exp_T(dist, M, tol)
    Etau = dists.expect_matrix_exp_tau(dist, M, tol, method="block")
    return _AffineTerms(ET.value, Etau.value, ET.error, Etau.error)


def _stationary_affine(A, a, J, R, dist, tol):
    n = A.shape[0]
    terms = _affine_terms(A, a, dist, tol)
    E_T, int_T = terms.ET_aug[:n, :n], terms.ET_aug[:n, n]
    E_tau, int_tau = terms.Etau_aug[:n, :n], terms.Etau_aug[:n, n]

    K = np.eye(n) - J @ E_T
    cond = float(np.linalg.cond(K))
    if cond > tol.cond_warn:
        warnings.warn(f"I - J<e^(A T)> is nearly singular (condition number {cond:.3g})", ConditioningWarning, stacklevel=3)
    rhs = R + J @ int_T
    y0 = np.linalg.solve(K, rhs)
    y = E_tau @ y0 + int_tau

    # first-order propagation of the quadrature errors
    K_inv = np.linalg.norm(np.linalg.inv(K), 2)
    J_norm = np.linalg.norm(J, 2)
    err_y0 = K_inv * J_norm * terms.err_T * (np.linalg.norm(y0) + 1.0)
    err = terms.err_tau * (np.linalg.norm(y0) + 1.0) + np.linalg.norm(E_tau, 2) * err_y0
    err += np.finfo(float).eps * cond * np.linalg.norm(y)
    return y, float(err), cond, terms


def _report(order, radius, tol, label, block=None):
    return StabilityReport(order, float(radius), bool(radius < 1.0 - tol.stability_margin), label, block)


def check_stability(m: PDMPModel, order: int = 1, tol=None) -> StabilityReport:
    """Spectral radius of the per-cycle contraction matrix.

    Order 1: J2 <e^{A_bar T}>. Order 2: J_mu2 <e^{A_mu_bar T}> on the lifted
    system, with the vec(x x^T) diagonal block's radius reported alongside.
    """
    tol = tol or tolerances.DEFAULT
    ensure_valid(m)
    if order == 1:
        A_bar, _ = effective_matrices(m)
        E = dists.expect_matrix_exp_T(m.dist, A_bar, tol).value
        return _report(1, spectral_radius(m.general.J @ E), tol, "J2 <exp(A_bar T)>")
    if order == 2:
        L = lift_second_order(m)
        A_bar, _ = L.effective()
        C = L.J_mu2 @ dists.expect_matrix_exp_T(m.dist, A_bar, tol).value
        n = m.dim
        block = spectral_radius(C[n:, n:])
        return _report(2, spectral_radius(C), tol, "J_mu2 <exp(A_mu_bar T)>", block)
    raise InputError(f"order must be 1 or 2, got {order}")


def _raise_if_unstable(report):
    if not report.stable:
        raise InfeasibleError(
            f"order-{report.order} stationary moments are infinite: spectral radius of "
            f"{report.matrix_checked} is {report.spectral_radius:.6g} (must be < 1)",
            spectral_radius=report.spectral_radius,
        )


def stationary_mean(m: PDMPModel, tol=None) -> MomentSolution:
    tol = tol or tolerances.DEFAULT
    report = check_stability(m, 1, tol)
    _raise_if_unstable(report)
    A_bar, a_bar = effective_matrices(m)
    mean, err, cond, _ = _stationary_affine(A_bar, a_bar, m.general.J, m.general.R, m.dist, tol)
    return MomentSolution(mean=mean, stability=(report,), numerical_error_estimate=err, condition_number=cond)


def _cv2(mean, cov, tol):
    scale = max(1.0, float(np.max(np.abs(mean), initial=0.0)))
    out = np.full(mean.shape, np.nan)
    ok = np.abs(mean) > tol.cv2_mean_floor * scale
    out[ok] = np.diag(cov)[ok] / mean[ok] ** 2
    return out


def stationary_second(m: PDMPModel, tol=None) -> MomentSolution:
    tol = tol or tolerances.DEFAULT
    first = stationary_mean(m, tol)
    report2 = check_stability(m, 2, tol)
    _raise_if_unstable(report2)

    n = m.dim
    L = lift_second_order(m)
    A_bar, a_bar = L.effective()
    mu, err, cond, _ = _stationary_affine(A_bar, a_bar, L.J_mu2, L.R_mu2, m.dist, tol)
    mean = mu[:n]
    scale = max(float(np.linalg.norm(first.mean)), 1e-300)
    if np.linalg.norm(mean - first.mean) > tol.mean_crosscheck_rtol * scale and np.linalg.norm(first.mean) > 0:
        raise InconsistencyError(
            f"mean block of the lifted solution {mean} disagrees with the first-order mean {first.mean}"
        )
    S = unvec(mu[n:], n)
    S = 0.5 * (S + S.T)
    cov = S - np.outer(mean, mean)
    return MomentSolution(
        mean=mean,
        second_moment=S,
        covariance=cov,
        cv2=_cv2(mean, cov, tol),
        stability=(first.stability[0], report2),
        numerical_error_estimate=max(err, first.numerical_error_estimate),
        condition_number=cond,
    )


def solve(m: PDMPModel, order: int = 2, tol=None) -> MomentSolution:
    if order == 1:
        return stationary_mean(m, tol)
    if order == 2:
        return stationary_second(m, tol)
    raise InputError(f"order must be 1 or 2, got {order}")


def conditional_mean_ode_oracle(m: PDMPModel, tau_grid=None, n_grid=4001) -> ConditionalMeanCurve:
    """Independent check of the stationary mean via the timer-conditioned mean.

    E[x | tau] solves d/dtau E[x|tau] = a_bar + A_bar E[x|tau]. Its value at
    tau = 0 is fixed by the renewal reset, and the curve is then averaged
    against the timer density. All T- and tau-integrals here use composite
    Simpson on a uniform grid rather than the adaptive functionals.
    """
    ensure_valid(m)
    _raise_if_unstable(check_stability(m, 1))
    A_bar, a_bar = effective_matrices(m)
    J2, R2, d = m.general.J, m.general.R, m.dist
    n = m.dim

    if tau_grid is None:
        tau_grid = np.linspace(0.0, d.support_end(), n_grid)
    tau = np.asarray(tau_grid, dtype=float)
    flows = [flow_with_integral(A_bar, a_bar, t) for t in tau]
    Phi = np.array([f[0] for f in flows])
    forced = np.array([f[1] for f in flows])

    if isinstance(d, dists.Deterministic):
        Phi_T, forced_T = flow_with_integral(A_bar, a_bar, d.value)
    else:
        w = d.pdf(tau)
        Phi_T = simpson(Phi * w[:, None, None], x=tau, axis=0)
        forced_T = simpson(forced * w[:, None], x=tau, axis=0)

    x0 = np.linalg.solve(np.eye(n) - J2 @ Phi_T, R2 + J2 @ forced_T)
    cond_mean = np.einsum("tij,j->ti", Phi, x0) + forced
    p = timer_density_on(d, tau)
    mean = simpson(cond_mean * p[:, None], x=tau, axis=0)
    return ConditionalMeanCurve(tau=tau, conditional_mean=cond_mean, initial=x0, mean=mean)


def timer_density_on(d, tau):
    if isinstance(d, dists.Deterministic):
        # uniform on [0, d); the right endpoint belongs to the next cycle
        return np.where(tau <= d.value, 1.0 / d.value, 0.0)
    return dists.timer_pdf(d, tau)


def lifted_ode_stationary(m: PDMPModel, t_end=None, rtol=1e-12, atol=1e-14):
    """Integrate d<mu>/dt = a_mu_bar + A_mu_bar <mu> from zero to (near) convergence.

    Only meaningful when renewal resets are no-ops (J2 = I and zero noise);
    used as an oracle for that reduction.
    """
    from scipy.integrate import solve_ivp

    L = lift_second_order(m)
    A_bar, a_bar = L.effective()
    if t_end is None:
        decay = -np.max(np.linalg.eigvals(A_bar).real)
        t_end = 60.0 / decay
    sol = solve_ivp(lambda t, y: a_bar + A_bar @ y, (0.0, t_end), np.zeros(L.dim),
                    method="DOP853", rtol=rtol, atol=atol)
    return sol.y[:, -1]


__all__ = [
    "StabilityReport", "MomentSolution", "ConditionalMeanCurve", "check_stability",
    "stationary_mean", "stationary_second", "solve", "conditional_mean_ode_oracle",
    "lifted_ode_stationary",
]
