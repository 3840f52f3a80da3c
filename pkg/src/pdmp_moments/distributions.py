"""Inter-event time laws for the renewal-timed reset family.

Every law exposes pdf / sf / ppf / moments / samplers. The module-level
functions compute the expectation functionals the moment solver consumes,
both over the inter-event time T and over the stationary timer tau (time
since the last renewal), whose density is sf(tau) / <T>.

Expectation functionals return an :class:`Expectation` ``(value, error)``.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, NamedTuple

import mpmath
import numpy as np
import scipy.linalg
from scipy import integrate, special, stats
from scipy.interpolate import PchipInterpolator
from scipy.linalg import fractional_matrix_power

from . import tolerances
from .errors import DivergenceError, DomainError, InputError, LinalgOverflowError, QuadratureError
from .linalg import as_matrix, expm, spectral_abscissa

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class Expectation(NamedTuple):
    value: object
    error: float


def _positive(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise InputError(f"{name} must be a finite positive number, got {value}")
    return value


class InterEventDistribution(ABC):
    """A continuous law on (0, inf) for the renewal inter-event time."""

    kind: str = ""

    # -- law primitives -------------------------------------------------
    @abstractmethod
    def pdf(self, t): ...

    @abstractmethod
    def sf(self, t): ...

    def cdf(self, t):
        return 1.0 - self.sf(t)

    def logpdf(self, t):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(t))

    def logsf(self, t):
        with np.errstate(divide="ignore"):
            return np.log(self.sf(t))

    @abstractmethod
    def ppf(self, q): ...

    @abstractmethod
    def moment(self, order: int) -> float:
        """Raw moment E[T^order] for any positive integer order."""

    @abstractmethod
    def sample(self, rng, size=None): ...

    @abstractmethod
    def to_dict(self) -> dict: ...

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def cv2(self) -> float:
        m = self.mean
        return self.moment(2) / (m * m) - 1.0

    def support_end(self, tail_mass=None) -> float:
        """Upper truncation point used by quadrature."""
        if tail_mass is None:
            tail_mass = tolerances.DEFAULT.tail_mass
        return float(self.ppf(1.0 - tail_mass))

    def support_start(self) -> float:
        return 0.0

    def breakpoints(self, upper):
        qs = self.ppf(np.array([1e-3, 0.1, 0.5, 0.9, 0.999]))
        return [float(x) for x in np.unique(qs) if 0.0 < x < upper]

    def sample_timer(self, rng, size=None):
        """Draw the stationary timer: a uniform fraction of a length-biased T.

        Length-biased draws come from rejection with acceptance T / t_max.
        Subclasses override with exact samplers where one exists.
        """
        n = 1 if size is None else int(np.prod(size))
        t_max = self.support_end()
        out = np.empty(0)
        while out.size < n:
            batch = np.asarray(self.sample(rng, size=max(2 * (n - out.size), 64)))
            keep = rng.random(batch.size) * t_max < batch
            out = np.concatenate([out, batch[keep]])
        out = out[:n] * rng.random(n)
        return float(out[0]) if size is None else out.reshape(size)

    def laplace_complement(self, s, tol=None):
        """E[1 - exp(-s T)] for s >= 0, computed without cancellation."""
        s = float(s)
        if s == 0:
            return 0.0
        return float(expect_over_T(self, lambda t: -np.expm1(-s * t), tol=tol).value)

    def _matrix_exp_fast(self, M):
        """Closed-form E[exp(M T)], or None when the law has none."""
        return None

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "type")
        return f"{type(self).__name__}({args})"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self))


def _mp_laplace_complement(d, pdf, s):
    # tanh-sinh quadrature at 30 digits, split at quantiles so the peak is resolved
    s = float(s)
    if s == 0:
        return 0.0
    cuts = [0.0, *d.breakpoints(math.inf), mpmath.inf]
    with mpmath.workdps(30):
        sm = mpmath.mpf(s)
        value = mpmath.quad(lambda t: -mpmath.expm1(-sm * t) * pdf(t), cuts)
    return float(value)


class _ScipyBacked(InterEventDistribution):
    _frozen: object

    def pdf(self, t):
        return self._frozen.pdf(t)

    def sf(self, t):
        return self._frozen.sf(t)

    def cdf(self, t):
        return self._frozen.cdf(t)

    def logpdf(self, t):
        return self._frozen.logpdf(t)

    def logsf(self, t):
        return self._frozen.logsf(t)

    def ppf(self, q):
        return self._frozen.ppf(q)


class Gamma(_ScipyBacked):
    kind = "gamma"

    def __init__(self, shape, scale):
        self.shape = _positive("gamma shape", shape)
        self.scale = _positive("gamma scale", scale)
        self._frozen = stats.gamma(a=self.shape, scale=self.scale)

    @classmethod
    def from_mean_cv2(cls, mean, cv2):
        return cls(shape=1.0 / cv2, scale=mean * cv2)

    def moment(self, order):
        k = int(order)
        return float(self.scale**k * np.exp(special.gammaln(self.shape + k) - special.gammaln(self.shape)))

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size=size)

    def sample_timer(self, rng, size=None):
        # length-biased gamma(k, theta) is gamma(k + 1, theta)
        return rng.random(size) * rng.gamma(self.shape + 1.0, self.scale, size=size)

    def laplace_complement(self, s, tol=None):
        return float(-np.expm1(-self.shape * np.log1p(float(s) * self.scale)))

    def _matrix_exp_fast(self, M):
        # E[exp(MT)] = (I - theta M)^(-k), valid while Re(eig M) < 1/theta
        n = M.shape[0]
        K = np.eye(n) - self.scale * M
        if n and np.min(np.linalg.eigvals(K).real) <= 0:
            raise DivergenceError(
                f"E[exp(M T)] diverges: spectral abscissa {spectral_abscissa(M):.6g} "
                f">= 1/scale = {1 / self.scale:.6g}"
            )
        if float(self.shape).is_integer() and self.shape <= 64:
            value = np.linalg.matrix_power(np.linalg.inv(K), int(self.shape))
        else:
            value = np.real(fractional_matrix_power(K, -self.shape))
        return value

    def to_dict(self):
        return {"type": self.kind, "shape": self.shape, "scale": self.scale}


class Exponential(Gamma):
    kind = "exponential"

    def __init__(self, rate):
        self.rate = _positive("exponential rate", rate)
        super().__init__(shape=1.0, scale=1.0 / self.rate)

    def moment(self, order):
        k = int(order)
        return float(math.factorial(k) / self.rate**k)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size=size)

    def sample_timer(self, rng, size=None):
        # memoryless: the timer law is the law itself
        return rng.exponential(1.0 / self.rate, size=size)

    def laplace_complement(self, s, tol=None):
        s = float(s)
        return s / (self.rate + s)

    def _matrix_exp_fast(self, M):
        n = M.shape[0]
        K = np.eye(n) - M / self.rate
        if n and np.min(np.linalg.eigvals(K).real) <= 0:
            raise DivergenceError(
                f"E[exp(M T)] diverges: spectral abscissa {spectral_abscissa(M):.6g} >= rate {self.rate:.6g}"
            )
        return np.linalg.inv(K)

    def to_dict(self):
        return {"type": self.kind, "rate": self.rate}


class LogNormal(_ScipyBacked):
    kind = "lognormal"

    def __init__(self, log_mean, log_sd):
        self.log_mean = float(log_mean)
        if not math.isfinite(self.log_mean):
            raise InputError("lognormal log_mean must be finite")
        self.log_sd = _positive("lognormal log_sd", log_sd)
        self._frozen = stats.lognorm(s=self.log_sd, scale=math.exp(self.log_mean))

    def moment(self, order):
        k = int(order)
        return float(np.exp(k * self.log_mean + 0.5 * k * k * self.log_sd**2))

    def sample(self, rng, size=None):
        return rng.lognormal(self.log_mean, self.log_sd, size=size)

    def sample_timer(self, rng, size=None):
        return rng.random(size) * rng.lognormal(self.log_mean + self.log_sd**2, self.log_sd, size=size)

    def laplace_complement(self, s, tol=None):
        mu, sd = self.log_mean, self.log_sd

        def pdf(t):
            return mpmath.exp(-((mpmath.log(t) - mu) ** 2) / (2 * sd**2)) / (t * sd * mpmath.sqrt(2 * mpmath.pi))

        return _mp_laplace_complement(self, pdf, s)

    def to_dict(self):
        return {"type": self.kind, "log_mean": self.log_mean, "log_sd": self.log_sd}


class Weibull(_ScipyBacked):
    kind = "weibull"

    def __init__(self, shape, scale):
        self.shape = _positive("weibull shape", shape)
        self.scale = _positive("weibull scale", scale)
        self._frozen = stats.weibull_min(c=self.shape, scale=self.scale)

    def moment(self, order):
        k = int(order)
        return float(self.scale**k * special.gamma(1.0 + k / self.shape))

    def sample(self, rng, size=None):
        return self.scale * rng.weibull(self.shape, size=size)

    def sample_timer(self, rng, size=None):
        # (T*/scale)^shape ~ Gamma(1 + 1/shape) under length biasing
        g = rng.gamma(1.0 + 1.0 / self.shape, 1.0, size=size)
        return rng.random(size) * self.scale * g ** (1.0 / self.shape)

    def laplace_complement(self, s, tol=None):
        c, lam = self.shape, self.scale

        def pdf(t):
            return (c / lam) * (t / lam) ** (c - 1) * mpmath.exp(-((t / lam) ** c))

        return _mp_laplace_complement(self, pdf, s)

    def to_dict(self):
        return {"type": self.kind, "shape": self.shape, "scale": self.scale}


class Deterministic(InterEventDistribution):
    """Point mass at ``value``; every functional is evaluated exactly."""

    kind = "deterministic"

    def __init__(self, value):
        self.value = _positive("deterministic value", value)

    def pdf(self, t):
        raise DomainError("deterministic law is a point mass and has no density")

    def sf(self, t):
        return np.where(np.asarray(t, dtype=float) < self.value, 1.0, 0.0)

    def ppf(self, q):
        return np.full_like(np.asarray(q, dtype=float), self.value)

    def moment(self, order):
        return self.value ** int(order)

    def sample(self, rng, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def sample_timer(self, rng, size=None):
        return self.value * rng.random(size)

    def support_end(self, tail_mass=None):
        return self.value

    def laplace_complement(self, s, tol=None):
        return float(-np.expm1(-float(s) * self.value))

    def _matrix_exp_fast(self, M):
        return expm(M * self.value)

    def to_dict(self):
        return {"type": self.kind, "value": self.value}


class Tabulated(InterEventDistribution):
    """Empirical law from a grid of (t, pdf) points.

    The grid pdf is integrated by the trapezoid rule into CDF knots, renormalised,
    and interpolated with a monotone cubic (PCHIP). The density is the derivative
    of that CDF, so it is nonnegative and integrates to one exactly.
    """

    kind = "tabulated"

    def __init__(self, points):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise InputError("tabulated points must be a list of at least three [t, pdf] pairs")
        t, p = pts[:, 0], pts[:, 1]
        if not np.all(np.isfinite(pts)):
            raise InputError("tabulated points must be finite")
        if t[0] < 0 or np.any(np.diff(t) <= 0):
            raise InputError("tabulated t grid must start at t >= 0 and be strictly increasing")
        if np.any(p < 0):
            raise InputError("tabulated pdf values must be nonnegative")
        knots = np.concatenate([[0.0], integrate.cumulative_trapezoid(p, t)])
        if knots[-1] <= 0:
            raise InputError("tabulated pdf has zero total mass")
        self.points = pts
        self._t = t
        self._cdf_knots = knots / knots[-1]
        self._cdf = PchipInterpolator(t, self._cdf_knots, extrapolate=False)
        self._dens = self._cdf.derivative()
        self._moments = {}

    def _clip(self, t):
        return np.clip(np.asarray(t, dtype=float), self._t[0], self._t[-1])

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t <= self._t[0], 0.0, np.where(t >= self._t[-1], 1.0, self._cdf(self._clip(t))))
        return np.clip(out, 0.0, 1.0)

    def sf(self, t):
        return 1.0 - self.cdf(t)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self._t[0]) & (t <= self._t[-1])
        return np.where(inside, np.maximum(self._dens(self._clip(t)), 0.0), 0.0)

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        flat = q.reshape(-1)
        lo = np.full(flat.shape, self._t[0])
        hi = np.full(flat.shape, self._t[-1])
        # bracket by knot, then bisect on the monotone interpolant
        idx = np.clip(np.searchsorted(self._cdf_knots, flat, side="right") - 1, 0, self._t.size - 2)
        lo, hi = self._t[idx], self._t[idx + 1]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self._cdf(mid) < flat
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return (0.5 * (lo + hi)).reshape(q.shape)

    def support_start(self):
        return float(self._t[0])

    def support_end(self, tail_mass=None):
        return float(self._t[-1])

    def breakpoints(self, upper):
        return [float(x) for x in self._t[1:-1] if x < upper]

    def _segment_integral(self, g):
        # the density is quadratic per segment: 8-point Gauss-Legendre is exact
        # for polynomial g up to degree 13
        a, b = self._t[:-1, None], self._t[1:, None]
        x = 0.5 * (b - a) * _GL_NODES[None, :] + 0.5 * (a + b)
        w = 0.5 * (b - a) * _GL_WEIGHTS[None, :]
        return float(np.sum(w * g(x) * self.pdf(x)))

    def laplace_complement(self, s, tol=None):
        s = float(s)
        return self._segment_integral(lambda x: -np.expm1(-s * x))

    def _matrix_exp_fast(self, M):
        # Gauss-Legendre per knot segment, split so that |M| h <= 1 on every
        # piece; the exponentials are evaluated in one batched call
        norm = float(np.linalg.norm(M, 1))
        a, b = self._t[:-1], self._t[1:]
        pieces = np.maximum(1, np.ceil((b - a) * norm)).astype(int)
        starts = np.concatenate([np.linspace(lo, hi, k + 1)[:-1] for lo, hi, k in zip(a, b, pieces)])
        widths = np.repeat((b - a) / pieces, pieces)
        x = (starts[:, None] + 0.5 * widths[:, None] * (_GL_NODES[None, :] + 1.0)).ravel()
        w = (0.5 * widths[:, None] * _GL_WEIGHTS[None, :]).ravel() * self.pdf(x)
        keep = w != 0
        with np.errstate(over="ignore", invalid="ignore"):
            E = scipy.linalg.expm(M[None, :, :] * x[keep, None, None])
        value = np.tensordot(w[keep], E, axes=1)
        if not np.all(np.isfinite(value)):
            raise DivergenceError("E[exp(M T)] overflowed on the tabulated support")
        return value

    def moment(self, order):
        k = int(order)
        if k not in self._moments:
            self._moments[k] = self._segment_integral(lambda x: x**k)
        return self._moments[k]

    def sample(self, rng, size=None):
        u = rng.random(size)
        return float(self.ppf(u)) if size is None else self.ppf(u)

    def to_dict(self):
        return {"type": self.kind, "points": self.points.tolist()}


_KINDS = {
    "exponential": (Exponential, ("rate",)),
    "gamma": (Gamma, ("shape", "scale")),
    "deterministic": (Deterministic, ("value",)),
    "lognormal": (LogNormal, ("log_mean", "log_sd")),
    "weibull": (Weibull, ("shape", "scale")),
    "tabulated": (Tabulated, ("points",)),
}


def from_dict(spec: dict) -> InterEventDistribution:
    """Build a law from its JSON form, e.g. ``{"type": "gamma", "shape": 8, "scale": 0.25}``."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise InputError("distribution must be an object with a 'type' key")
    kind = spec["type"]
    if kind not in _KINDS:
        raise InputError(f"unknown distribution type {kind!r}; expected one of {sorted(_KINDS)}")
    cls, fields = _KINDS[kind]
    extra = set(spec) - set(fields) - {"type"}
    missing = set(fields) - set(spec)
    if extra:
        raise InputError(f"distribution {kind!r}: unknown keys {sorted(extra)}")
    if missing:
        raise InputError(f"distribution {kind!r}: missing keys {sorted(missing)}")
    return cls(**{f: spec[f] for f in fields})


@dataclass(frozen=True)
class TimerLaw:
    """Stationary law of the time since the last renewal."""

    dist: InterEventDistribution

    def survival(self, t):
        return self.dist.sf(t)

    def pdf(self, t):
        return timer_pdf(self.dist, t)

    def sample(self, rng, size=None):
        return self.dist.sample_timer(rng, size)


# -- scalar functions of the law -------------------------------------------

def hazard(d: InterEventDistribution, t):
    """f(t) / sf(t)."""
    if isinstance(d, Deterministic):
        raise DomainError("deterministic law has no hazard function (distributional spike); sample it directly")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("hazard is defined for t >= 0 only")
    tol = tolerances.DEFAULT
    logsf = np.asarray(d.logsf(t))
    if np.any(logsf <= math.log(tol.survival_floor)) or np.any(t > d.support_end()):
        raise DomainError(
            f"hazard requested beyond the support: survival underflows past t = {d.support_end():.6g}"
        )
    out = np.exp(np.asarray(d.logpdf(t)) - logsf)
    return float(out) if out.ndim == 0 else out


def timer_pdf(d: InterEventDistribution, t):
    """Stationary timer density sf(t) / <T>."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("timer_pdf is defined for t >= 0 only")
    out = np.asarray(d.sf(t), dtype=float) / d.mean
    return float(out) if out.ndim == 0 else out


def raw_moment(d: InterEventDistribution, order: int) -> float:
    if order not in (1, 2, 3):
        raise InputError(f"raw_moment order must be 1, 2 or 3, got {order}")
    value = d.moment(order)
    if not math.isfinite(value):
        raise DomainError(f"moment of order {order} is infinite for {d!r}")
    return value


def sample_T(d: InterEventDistribution, rng, size=None):
    return d.sample(rng, size)


# -- expectation functionals ----------------------------------------------

def _quad(fun, a, b, tol, points=None):
    tol = tol or tolerances.DEFAULT
    value, err, info = integrate.quad_vec(
        fun, a, b, epsabs=tol.quad_atol, epsrel=tol.quad_rtol,
        points=points or None, limit=4000 + 10 * len(points or ()), full_output=True,
    )
    if not info.success:
        raise QuadratureError(
            f"adaptive quadrature did not converge on [{a:.6g}, {b:.6g}] "
            f"(error estimate {err:.3g}, {info.neval} evaluations)",
            error_estimate=float(err),
        )
    return value, float(err)


def expect_over_T(d: InterEventDistribution, g: Callable, tol=None) -> Expectation:
    """E[g(T)] for scalar- or array-valued g.

    Adaptive Gauss-Kronrod on [0, quantile(1 - tail_mass)]; the point mass
    is evaluated exactly.
    """
    if isinstance(d, Deterministic):
        return Expectation(g(d.value), 0.0)
    upper = d.support_end(tol.tail_mass if tol else None)
    lower = d.support_start()
    value, err = _quad(lambda t: g(t) * d.pdf(t), lower, upper, tol, d.breakpoints(upper))
    return Expectation(value, err)


def _check_tail(d, M, value, tol):
    # heuristic divergence guard: the truncated tail must be negligible
    if spectral_abscissa(M) <= 0:
        return
    q = d.support_end(tol.tail_mass if tol else None)
    try:
        tail = np.linalg.norm(expm(M * q)) * float(d.sf(q) if not isinstance(d, Tabulated) else 0.0)
    except LinalgOverflowError:
        tail = math.inf
    scale = max(1.0, float(np.linalg.norm(value)))
    if not math.isfinite(tail) or tail > 1e-6 * scale:
        raise DivergenceError(
            f"E[exp(M T)] appears divergent: spectral abscissa {spectral_abscissa(M):.6g} "
            f"with tail weight {tail:.3g} at truncation point {q:.6g}"
        )


def expect_matrix_exp_T(d: InterEventDistribution, M, tol=None, method="auto") -> Expectation:
    """E[exp(M T)].

    ``method``: "auto" takes a direct evaluation when the law has one (closed
    forms for gamma, exponential and the point mass; a fixed Gauss-Legendre
    rule on the knots of a tabulated law) and adaptive quadrature otherwise.
    "quadrature" forces the adaptive route.
    """
    M = as_matrix(M)
    n = M.shape[0]
    if method not in ("auto", "analytic", "quadrature"):
        raise InputError(f"unknown method {method!r}")
    if method != "quadrature" or isinstance(d, Deterministic):
        fast = d._matrix_exp_fast(M)
        if fast is not None:
            if not np.all(np.isfinite(fast)):
                raise DivergenceError("closed-form E[exp(M T)] is not finite")
            return Expectation(fast, 1e2 * np.finfo(float).eps * max(1.0, float(np.linalg.norm(fast))))
        if method == "analytic":
            raise InputError(f"no direct evaluation of E[exp(MT)] for {d.kind} laws")
    if not np.any(M):
        return Expectation(np.eye(n), 0.0)

    def integrand(t):
        try:
            return expm(M * t)
        except LinalgOverflowError as exc:
            raise DivergenceError(f"integrand overflowed at t = {t:.6g}") from exc

    value, err = expect_over_T(d, integrand, tol)
    _check_tail(d, M, value, tol)
    return Expectation(value, err)


def expect_over_tau(d: InterEventDistribution, g: Callable, tol=None, method="timer") -> Expectation:
    """E[g(tau)] under the stationary timer law.

    "timer": integrate g against sf / <T>.  "renewal": (1/<T>) E_T[int_0^T g(u) du]
    with nested quadrature. The two are the same number and serve as cross-checks.
    """
    m = d.mean
    if method == "timer":
        if isinstance(d, Deterministic):
            value, err = _quad(g, 0.0, d.value, tol)
            return Expectation(value / m, err / m)
        upper = d.support_end(tol.tail_mass if tol else None)
        value, err = _quad(lambda u: g(u) * (d.sf(u) / m), 0.0, upper, tol, d.breakpoints(upper))
        return Expectation(value, err)
    if method == "renewal":
        errs = []

        def G(T):
            if T <= 0:
                return 0.0 * np.asarray(g(0.0))
            v, e = _quad(g, 0.0, T, tol)
            errs.append(e)
            return v

        outer = expect_over_T(d, G, tol)
        inner_err = max(errs) if errs else 0.0
        return Expectation(outer.value / m, (outer.error + inner_err) / m)
    raise InputError(f"unknown method {method!r}")


def expect_matrix_exp_tau(d: InterEventDistribution, M, tol=None, method="auto") -> Expectation:
    """E[exp(M tau)] under the stationary timer law.

    "inverse":    M^{-1} (E[exp(M T)] - I) / <T>
    "block":      (1/<T>) E_T[int_0^T exp(M u) du], the integral read off the
                  top-right block of exp([[M, I], [0, 0]] T); no inversion
    "quadrature": integrate exp(M u) against the timer density
    "auto":       "inverse" when cond(M) is moderate, otherwise "block"
    """
    M = as_matrix(M)
    n = M.shape[0]
    tol_rec = tol or tolerances.DEFAULT
    m = d.mean
    if method == "auto":
        if not np.any(M):
            return Expectation(np.eye(n), 0.0)
        method = "inverse" if np.linalg.cond(M) <= tol_rec.inverse_cond_max else "block"
    if method == "inverse":
        ET = expect_matrix_exp_T(d, M, tol)
        value = np.linalg.solve(M, ET.value - np.eye(n)) / m
        return Expectation(value, float(np.linalg.norm(np.linalg.inv(M), 2)) * ET.error / m)
    if method == "block":
        big = np.zeros((2 * n, 2 * n))
        big[:n, :n] = M
        big[:n, n:] = np.eye(n)
        ET = expect_matrix_exp_T(d, big, tol)
        return Expectation(ET.value[:n, n:] / m, ET.error / m)
    if method == "quadrature":

        def integrand(u):
            try:
                return expm(M * u)
            except LinalgOverflowError as exc:
                raise DivergenceError(f"integrand overflowed at tau = {u:.6g}") from exc

        return expect_over_tau(d, integrand, tol, method="timer")
    raise InputError(f"unknown method {method!r}")
