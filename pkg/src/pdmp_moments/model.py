"""Model description, validation, and the second-order Kronecker lift.

Between events the state obeys dx/dt = a_hat + A x. Poisson-timed families
reset x -> J1 x + R1 with R1 random (only its first two moments matter).
The single renewal-timed family draws x_+ with

    E[x_+ | x]   = J2 x + R2
    Cov[x_+ | x] = Q2 x x^T Q2^T + B2 x C2^T + C2 x^T B2^T + D2.

Constructors only coerce shapes; :func:`validate` reports invariant
violations so that broken models can still be inspected.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import distributions as dists
from .errors import ModelError
from .linalg import as_matrix, as_vector, kron, vec


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LinearDynamics:
    a_hat: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a_hat", _frozen(as_vector(self.a_hat, "a_hat")))
        object.__setattr__(self, "A", _frozen(as_matrix(self.A, "A")))

    @property
    def dim(self):
        return self.a_hat.shape[0]


@dataclass(frozen=True, eq=False)
class PoissonResetFamily:
    rate: float
    J: np.ndarray
    R_mean: np.ndarray
    R_second: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "J", _frozen(as_matrix(self.J, "J1")))
        R_mean = as_vector(self.R_mean, "R1_mean")
        object.__setattr__(self, "R_mean", _frozen(R_mean))
        if self.R_second is None:
            second = np.outer(R_mean, R_mean)
        else:
            second = as_matrix(self.R_second, "R1_second")
        object.__setattr__(self, "R_second", _frozen(second))

    @property
    def R_cov(self):
        return self.R_second - np.outer(self.R_mean, self.R_mean)


@dataclass(frozen=True, eq=False)
class GeneralResetFamily:
    dist: dists.InterEventDistribution
    J: np.ndarray
    R: np.ndarray | None = None
    Q: np.ndarray | None = None
    B: np.ndarray | None = None
    C: np.ndarray | None = None
    D: np.ndarray | None = None

    def __post_init__(self):
        J = as_matrix(self.J, "J2")
        n = J.shape[0]
        object.__setattr__(self, "J", _frozen(J))
        for name, default in (("R", np.zeros(n)), ("C", np.zeros(n))):
            v = getattr(self, name)
            object.__setattr__(self, name, _frozen(default if v is None else as_vector(v, name + "2")))
        for name in ("Q", "B", "D"):
            v = getattr(self, name)
            object.__setattr__(self, name, _frozen(np.zeros((n, n)) if v is None else as_matrix(v, name + "2")))

    def conditional_mean(self, x):
        return self.J @ x + self.R

    def conditional_cov(self, x):
        Qx = self.Q @ x
        Bx = self.B @ x
        return np.outer(Qx, Qx) + np.outer(Bx, self.C) + np.outer(self.C, Bx) + self.D


@dataclass(frozen=True, eq=False)
class PDMPModel:
    dynamics: LinearDynamics
    general: GeneralResetFamily
    poisson: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "poisson", tuple(self.poisson))

    @property
    def dim(self):
        return self.dynamics.dim

    @property
    def dist(self):
        return self.general.dist


@dataclass(frozen=True, eq=False)
class LiftedModel:
    """Dynamics and resets of mu = [x; vec(x x^T)], dimension n + n^2."""

    n: int
    a_mu: np.ndarray
    A_mu: np.ndarray
    poisson: tuple  # (rate, J_mu1, R_mu1) per family
    J_mu2: np.ndarray
    R_mu2: np.ndarray
    dist: dists.InterEventDistribution

    @property
    def dim(self):
        return self.n + self.n * self.n

    def effective(self):
        """(A_mu_bar, a_mu_bar): Poisson resets folded into the flow."""
        N = self.dim
        A_bar = self.A_mu.copy()
        a_bar = self.a_mu.copy()
        for rate, J, R in self.poisson:
            A_bar += rate * (J - np.eye(N))
            a_bar += rate * R
        return A_bar, a_bar


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        if self.ok:
            return "model is valid"
        return "\n".join(str(v) for v in self.violations)


def _sym_tol(M):
    return 1e-10 * max(1.0, float(np.abs(M).max(initial=0.0)))


def _psd(M):
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    return w.min(initial=0.0) >= -1e-10 * max(1.0, float(np.abs(w).max(initial=0.0)))


def validate(m: PDMPModel) -> ValidationReport:
    out = []
    bad = out.append
    n = m.dynamics.a_hat.shape[0]

    def shape_check(path, arr, shape):
        if arr.shape != shape:
            bad(Violation(path, f"dimension mismatch: expected shape {shape}, got {arr.shape}"))
            return False
        if not np.all(np.isfinite(arr)):
            bad(Violation(path, "non-finite entries"))
            return False
        return True

    shape_check("dynamics.a_hat", m.dynamics.a_hat, (n,))
    shape_check("dynamics.A", m.dynamics.A, (n, n))

    for i, fam in enumerate(m.poisson):
        p = f"poisson_resets[{i}]"
        if not (np.isfinite(fam.rate) and fam.rate > 0):
            bad(Violation(f"{p}.rate", f"rate must be positive, got {fam.rate}"))
        shape_check(f"{p}.J", fam.J, (n, n))
        ok_mean = shape_check(f"{p}.R_mean", fam.R_mean, (n,))
        if shape_check(f"{p}.R_second", fam.R_second, (n, n)):
            S = fam.R_second
            if np.abs(S - S.T).max(initial=0.0) > _sym_tol(S):
                bad(Violation(f"{p}.R_second", "must be symmetric"))
            elif not _psd(S):
                bad(Violation(f"{p}.R_second", "must be positive semidefinite"))
            elif ok_mean and not _psd(fam.R_cov):
                bad(Violation(f"{p}.R_second", "R_second - R_mean R_mean^T is not a valid covariance"))

    g = m.general
    if not isinstance(g.dist, dists.InterEventDistribution):
        bad(Violation("general_reset.distribution", "not an inter-event distribution"))
    shape_check("general_reset.J", g.J, (n, n))
    shape_check("general_reset.R", g.R, (n,))
    shape_check("general_reset.Q", g.Q, (n, n))
    shape_check("general_reset.B", g.B, (n, n))
    shape_check("general_reset.C", g.C, (n,))
    if shape_check("general_reset.D", g.D, (n, n)):
        if np.abs(g.D - g.D.T).max(initial=0.0) > _sym_tol(g.D):
            bad(Violation("general_reset.D", "D2 must be symmetric"))
    return ValidationReport(tuple(out))


def ensure_valid(m: PDMPModel) -> PDMPModel:
    report = validate(m)
    if not report.ok:
        raise ModelError(f"invalid model:\n{report}", report)
    return m


def effective_matrices(m: PDMPModel):
    """Fold Poisson resets into the flow: (A + sum h (J1 - I), a_hat + sum h <R1>)."""
    n = m.dim
    A_bar = np.array(m.dynamics.A)
    a_bar = np.array(m.dynamics.a_hat)
    for fam in m.poisson:
        A_bar += fam.rate * (fam.J - np.eye(n))
        a_bar += fam.rate * fam.R_mean
    return A_bar, a_bar


def lift_second_order(m: PDMPModel) -> LiftedModel:
    n = m.dim
    I = np.eye(n)
    A, a = m.dynamics.A, m.dynamics.a_hat
    a_col = a.reshape(n, 1)

    A_mu = np.zeros((n + n * n, n + n * n))
    A_mu[:n, :n] = A
    A_mu[n:, :n] = kron(I, a_col) + kron(a_col, I)
    A_mu[n:, n:] = kron(I, A) + kron(A, I)
    a_mu = np.concatenate([a, np.zeros(n * n)])

    poisson = []
    for fam in m.poisson:
        J, r = fam.J, fam.R_mean.reshape(n, 1)
        J_mu = np.zeros_like(A_mu)
        J_mu[:n, :n] = J
        # vec(J x r^T + r x^T J^T) = (r (x) J + J (x) r) x
        J_mu[n:, :n] = kron(J, r) + kron(r, J)
        J_mu[n:, n:] = kron(J, J)
        R_mu = np.concatenate([fam.R_mean, vec(fam.R_second)])
        poisson.append((fam.rate, J_mu, R_mu))

    g = m.general
    J2, R2, C2 = g.J, g.R.reshape(n, 1), g.C.reshape(n, 1)
    J_mu2 = np.zeros_like(A_mu)
    J_mu2[:n, :n] = J2
    J_mu2[n:, :n] = kron(g.B, C2) + kron(J2, R2) + kron(C2, g.B) + kron(R2, J2)
    J_mu2[n:, n:] = kron(J2, J2) + kron(g.Q, g.Q)
    R_mu2 = np.concatenate([g.R, vec(g.D + R2 @ R2.T)])
    return LiftedModel(n=n, a_mu=a_mu, A_mu=A_mu, poisson=tuple(poisson), J_mu2=J_mu2, R_mu2=R_mu2, dist=g.dist)
