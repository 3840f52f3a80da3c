"""Event-exact Monte Carlo for the PDMP.

Between events the linear flow is applied in closed form. Poisson families
fire after exponential gaps; the renewal family fires after a fresh draw of T
each cycle. The renewal reset is a pluggable :class:`ResetSampler`, since only
its first two conditional moments are part of the model.

Ensemble estimation follows a stationary protocol. Each trajectory starts at
zero and runs ``n_cycles_burnin`` full renewal cycles. It is then observed
after an extra time drawn from the stationary timer law. That is equivalent to
looking at a uniformly random phase of a (length-biased) cycle, so the
observation is a draw from the stationary distribution.

Random streams come from :func:`rng_stream`: one master seed, split by
``numpy.random.SeedSequence`` spawn keys. The ensemble engine is vectorised
over fixed-size blocks of trajectories, and block ``i`` uses stream ``i``.
Results therefore depend only on ``(seed, n_traj)``, never on the worker
count.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import distributions as dists
from .errors import InputError, PDMPError, SimulationError
from .linalg import augmented, flow_with_integral
from .model import PDMPModel, ensure_valid

BLOCK_SIZE = 4096
MIN_TRAJECTORIES = 100


def rng_stream(seed, index=0) -> np.random.Generator:
    """Independent PCG64 stream number ``index`` derived from ``seed``.

    The stream is ``SeedSequence(seed, spawn_key=(index,))``. That is exactly
    the ``index``-th child of ``SeedSequence(seed).spawn``, and it is the
    same on every platform.
    """
    if seed is None or int(seed) < 0 or int(index) < 0:
        raise InputError("seed and stream index must be non-negative integers")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


# -- samplers ----------------------------------------------------------------

class ResetSampler:
    """Draws the post-renewal state for a batch of pre-reset states (rows)."""

    kind = "abstract"

    def draw(self, general, X, rng):
        raise NotImplementedError

    def check(self, m: PDMPModel):
        pass


class AffineDeterministic(ResetSampler):
    """x+ = J2 x + R2 with no noise (ignores Q2, B2, C2, D2)."""

    kind = "affine-deterministic"

    def draw(self, general, X, rng):
        return X @ general.J.T + general.R


class MomentMatchedGaussian(ResetSampler):
    """Gaussian with the model's conditional mean and covariance.

    A covariance that comes out indefinite for some x (e.g. b x with x < 0)
    has its negative eigenvalues set to zero. Such events are counted in
    ``n_clipped``. ``clamp=True`` floors the draw at zero; that biases the
    moments and is meant for demonstration runs only.
    """

    kind = "moment-matched-gaussian"

    def __init__(self, clamp=False):
        self.clamp = bool(clamp)
        self.n_clipped = 0

    def draw(self, general, X, rng):
        mean = X @ general.J.T + general.R
        QX = X @ general.Q.T
        BX = X @ general.B.T
        C = general.C
        cov = (QX[:, :, None] * QX[:, None, :] + BX[:, :, None] * C[None, None, :]
               + C[None, :, None] * BX[:, None, :] + general.D)
        n = X.shape[1]
        if n == 1:
            var = cov[:, 0, 0]
            neg = var < 0
            self.n_clipped += int(np.count_nonzero(neg))
            out = mean + np.sqrt(np.where(neg, 0.0, var))[:, None] * rng.standard_normal(X.shape)
        else:
            w, V = np.linalg.eigh(0.5 * (cov + np.swapaxes(cov, 1, 2)))
            neg = w < 0
            self.n_clipped += int(np.count_nonzero(neg.any(axis=1)))
            z = rng.standard_normal(X.shape) * np.sqrt(np.where(neg, 0.0, w))
            out = mean + np.einsum("bij,bj->bi", V, z)
        if self.clamp:
            out = np.maximum(out, 0.0)
        return out


class BinomialPartition(ResetSampler):
    """x+ ~ Binomial(round(x), p); one-dimensional models only.

    Matches a model with J2 = p and conditional variance p (1 - p) x
    (B2 C2 = p (1 - p) / 2) when the state is integer valued.
    """

    kind = "binomial-partition"

    def __init__(self, p=0.5):
        p = float(p)
        if not 0.0 <= p <= 1.0:
            raise InputError(f"binomial partition probability must lie in [0, 1], got {p}")
        self.p = p

    def check(self, m):
        if m.dim != 1:
            raise InputError(f"binomial-partition sampler needs a one-dimensional model, got n = {m.dim}")

    def draw(self, general, X, rng):
        counts = np.rint(X[:, 0])
        if np.any(counts < 0):
            raise SimulationError(f"binomial partition needs non-negative states, got {X[:, 0].min():.6g}; "
                                  "use non-negative burst offsets with this sampler")
        return rng.binomial(counts.astype(np.int64), self.p).astype(float)[:, None]


class OffsetSampler:
    """Draws the random offset r1 of one Poisson family."""

    def __init__(self, kind, mean, second):
        self.kind = kind
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(second, dtype=float) - np.outer(self.mean, self.mean)
        n = self.mean.size
        if kind == "fixed":
            pass
        elif kind == "gaussian":
            w, V = np.linalg.eigh(0.5 * (self.cov + self.cov.T))
            self._factor = V * np.sqrt(np.clip(w, 0.0, None))
        elif kind == "gamma":
            var = np.diag(self.cov)
            if np.any(self.mean <= 0) or np.any(var <= 0):
                raise InputError("gamma offsets need a positive mean and variance in every component")
            if n > 1 and np.abs(self.cov - np.diag(var)).max() > 1e-12 * np.abs(self.cov).max():
                raise InputError("gamma offsets are drawn per component; R_second must have zero covariance off the diagonal")
            self._shape = self.mean**2 / var
            self._scale = var / self.mean
        else:
            raise InputError(f"unknown offset sampler {kind!r}; expected fixed, gaussian or gamma")

    def draw(self, rng, size):
        if self.kind == "fixed":
            return np.broadcast_to(self.mean, (size, self.mean.size))
        if self.kind == "gaussian":
            return self.mean + rng.standard_normal((size, self.mean.size)) @ self._factor.T
        return rng.gamma(self._shape, self._scale, size=(size, self.mean.size))


@dataclass
class Samplers:
    general: ResetSampler
    poisson: tuple = ()


GENERAL_SAMPLERS = {
    "affine-deterministic": AffineDeterministic,
    "moment-matched-gaussian": MomentMatchedGaussian,
    "binomial-partition": BinomialPartition,
}


def make_samplers(m: PDMPModel, general="moment-matched-gaussian", offsets="auto", p=0.5, clamp=False) -> Samplers:
    """Build samplers by name.

    ``offsets="auto"`` picks ``fixed`` for families whose R1 has zero
    covariance and ``gaussian`` otherwise.
    """
    if isinstance(general, ResetSampler):
        g = general
    elif general == "binomial-partition":
        g = BinomialPartition(p)
    elif general == "moment-matched-gaussian":
        g = MomentMatchedGaussian(clamp=clamp)
    elif general in GENERAL_SAMPLERS:
        g = GENERAL_SAMPLERS[general]()
    else:
        raise InputError(f"unknown sampler {general!r}; expected one of {sorted(GENERAL_SAMPLERS)}")
    g.check(m)
    out = []
    for fam in m.poisson:
        kind = offsets
        if offsets == "auto":
            kind = "fixed" if np.abs(fam.R_cov).max(initial=0.0) <= 1e-14 * max(1.0, np.abs(fam.R_second).max()) else "gaussian"
        out.append(OffsetSampler(kind, fam.R_mean, fam.R_second))
    return Samplers(g, tuple(out))


def _as_samplers(m, samplers):
    if isinstance(samplers, Samplers):
        samplers.general.check(m)
        return samplers
    return make_samplers(m, samplers if samplers is not None else "moment-matched-gaussian")


# -- single trajectory -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Event:
    time: float
    kind: str  # "poisson-<i>" or "general"
    before: np.ndarray
    after: np.ndarray


@dataclass(frozen=True, eq=False)
class Trajectory:
    seed: int
    events: tuple
    obs_times: np.ndarray
    obs_states: np.ndarray  # shape (len(obs_times), n)
    t_end: float
    final_state: np.ndarray

    def to_csv(self, fh=None):
        """Event log with columns time, event_kind, before_0.., after_0..."""
        n = self.final_state.size
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "event_kind", *(f"before_{i}" for i in range(n)), *(f"after_{i}" for i in range(n))])
        for e in self.events:
            w.writerow([repr(e.time), e.kind, *(repr(float(v)) for v in e.before), *(repr(float(v)) for v in e.after)])
        return buf.getvalue() if fh is None else None


def simulate_trajectory(m: PDMPModel, samplers=None, x0=None, t_end=1.0, seed=0, obs_times=None) -> Trajectory:
    """One trajectory on [0, t_end] with its full event log.

    The renewal clock starts fresh at t = 0. ``obs_times`` (sorted, within
    [0, t_end]) are filled in from the exact flow.
    """
    ensure_valid(m)
    if not t_end > 0:
        raise InputError(f"t_end must be positive, got {t_end}")
    s = _as_samplers(m, samplers)
    n = m.dim
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float).reshape(n)
    obs = np.sort(np.asarray([] if obs_times is None else obs_times, dtype=float))
    if obs.size and (obs[0] < 0 or obs[-1] > t_end):
        raise InputError("observation times must lie in [0, t_end]")
    rng = rng_stream(seed, 0)
    A, a = m.dynamics.A, m.dynamics.a_hat
    rates = [f.rate for f in m.poisson]

    t = 0.0
    next_poisson = [rng.exponential(1.0 / h) for h in rates]
    next_general = float(dists.sample_T(m.dist, rng))
    events = []
    obs_states = np.empty((obs.size, n))
    k_obs = 0

    def flow(x, dt):
        Phi, g = flow_with_integral(A, a, dt)
        return Phi @ x + g

    while True:
        candidates = next_poisson + [next_general]
        i = int(np.argmin(candidates))
        t_next = min(candidates[i], t_end)
        while k_obs < obs.size and obs[k_obs] <= t_next:
            obs_states[k_obs] = flow(x, obs[k_obs] - t)
            k_obs += 1
        x = flow(x, t_next - t)
        t = t_next
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"state became non-finite at t = {t:.6g}; the model is probably unstable",
                                  prefix=tuple(events))
        if candidates[i] > t_end:
            break
        before = x.copy()
        if i < len(rates):
            fam = m.poisson[i]
            x = fam.J @ x + s.poisson[i].draw(rng, 1)[0]
            next_poisson[i] = t + rng.exponential(1.0 / rates[i])
            kind = f"poisson-{i}"
        else:
            x = s.general.draw(m.general, x[None, :], rng)[0]
            next_general = t + float(dists.sample_T(m.dist, rng))
            kind = "general"
        events.append(Event(t, kind, before, x.copy()))
    return Trajectory(int(seed), tuple(events), obs, obs_states, float(t_end), x)


# -- ensemble engine ---------------------------------------------------------

class _Propagator:
    """Batched x -> e^{A dt} x + int_0^dt e^{As} a ds for a vector of dt."""

    def __init__(self, A, a):
        self.A, self.a = np.asarray(A), np.asarray(a)
        n = self.A.shape[0]
        self.zero = not np.any(self.A)
        self.eig = None
        if not self.zero:
            lam, V = np.linalg.eig(self.A)
            if np.linalg.cond(V) < 1e6:
                self.eig = (lam, V, np.linalg.inv(V))
        self.n = n

    def __call__(self, X, dt):
        if self.zero:
            return X + dt[:, None] * self.a
        if self.eig is not None:
            lam, V, Vinv = self.eig
            w = np.outer(dt, lam)
            safe = np.where(lam == 0, 1.0, lam)
            phi = np.where(lam == 0, dt[:, None], np.expm1(w) / safe)
            Y = (X @ Vinv.T) * np.exp(w) + phi * (Vinv @ self.a)
            out = Y @ V.T
            return out.real if np.iscomplexobj(out) else out
        E = scipy.linalg.expm(augmented(self.A, self.a)[None] * dt[:, None, None])
        return np.einsum("bij,bj->bi", E[:, : self.n, : self.n], X) + E[:, : self.n, self.n]


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    n_traj: int
    n_cycles_burnin: int
    mean: np.ndarray
    mean_se: np.ndarray
    second_moment: np.ndarray
    second_moment_se: np.ndarray
    cv2: np.ndarray
    cv2_se: np.ndarray
    obs_time_mean: float  # average absolute observation time
    states: np.ndarray = field(repr=False)       # (n_traj, n) observed states
    timers: np.ndarray = field(repr=False)       # timer value at observation
    cycle_means: np.ndarray = field(repr=False)  # ensemble mean just before each renewal

    @property
    def covariance(self):
        return self.second_moment - np.outer(self.mean, self.mean)

    def to_dict(self):
        return {
            "n_traj": self.n_traj,
            "n_cycles_burnin": self.n_cycles_burnin,
            "observation_time_mean": self.obs_time_mean,
            "mean": self.mean.tolist(),
            "mean_se": self.mean_se.tolist(),
            "second_moment": self.second_moment.tolist(),
            "second_moment_se": self.second_moment_se.tolist(),
            "covariance": self.covariance.tolist(),
            "cv2": [None if not math.isfinite(v) else v for v in self.cv2.tolist()],
            "cv2_se": [None if not math.isfinite(v) else v for v in self.cv2_se.tolist()],
        }


def _advance(X, L, prop, m, s, rng):
    """Flow every row of X for its own time L[i], applying Poisson resets on the way."""
    rates = np.array([f.rate for f in m.poisson])
    H = rates.sum()
    if H == 0:
        return prop(X, L)
    probs = rates / H
    rem = L.copy()
    idx = np.arange(X.shape[0])
    while idx.size:
        gap = rng.exponential(1.0 / H, size=idx.size)
        hit = gap < rem[idx]
        dt = np.where(hit, gap, rem[idx])
        X[idx] = prop(X[idx], dt)
        rem[idx] -= dt
        idx = idx[hit]
        if not idx.size:
            break
        fam_of = rng.choice(len(rates), size=idx.size, p=probs) if len(rates) > 1 else np.zeros(idx.size, int)
        for i, fam in enumerate(m.poisson):
            rows = idx[fam_of == i]
            if rows.size:
                X[rows] = X[rows] @ fam.J.T + s.poisson[i].draw(rng, rows.size)
    return X


def _run_block(m, s, prop, n_block, n_cycles, seed, block, x0):
    rng = rng_stream(seed, block)
    X = np.tile(x0, (n_block, 1))
    clock = np.zeros(n_block)
    cycle_sums = np.empty((n_cycles, m.dim))
    with np.errstate(over="ignore", invalid="ignore"):
        for c in range(n_cycles):
            L = np.asarray(dists.sample_T(m.dist, rng, size=n_block), dtype=float)
            X = _advance(X, L, prop, m, s, rng)
            clock += L
            if not np.all(np.isfinite(X)):
                raise SimulationError(f"state became non-finite in renewal cycle {c}; the model is probably unstable",
                                      prefix=cycle_sums[:c].copy())
            cycle_sums[c] = X.sum(axis=0)
            X = s.general.draw(m.general, X, rng)
        tau = np.asarray(m.dist.sample_timer(rng, size=n_block), dtype=float)
        X = _advance(X, tau, prop, m, s, rng)
    if not np.all(np.isfinite(X)):
        raise SimulationError("state became non-finite in the final partial cycle", prefix=cycle_sums)
    return X, tau, clock + tau, cycle_sums


def _warn_if_unstable(m):
    from .solver import check_stability

    for order in (1, 2):
        try:
            rep = check_stability(m, order)
        except PDMPError:
            continue
        if not rep.stable:
            warnings.warn(f"order-{order} moments of this model are infinite (spectral radius "
                          f"{rep.spectral_radius:.6g}); Monte Carlo estimates will not converge",
                          RuntimeWarning, stacklevel=3)
            return


def _cv2_with_se(states):
    n = states.shape[0]
    m1 = states.mean(axis=0)
    m2 = (states**2).mean(axis=0)
    cv2 = np.full(m1.shape, np.nan)
    se = np.full(m1.shape, np.nan)
    for j in range(m1.size):
        if m1[j] == 0:
            continue
        cov = np.cov(np.vstack([states[:, j], states[:, j] ** 2]), ddof=1) / n
        grad = np.array([-2.0 * m2[j] / m1[j] ** 3, 1.0 / m1[j] ** 2])
        cv2[j] = m2[j] / m1[j] ** 2 - 1.0
        se[j] = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    return cv2, se


def estimate_stationary_moments(m: PDMPModel, samplers=None, n_traj=10_000, n_cycles_burnin=50, seed=0,
                                workers=1, x0=None) -> EnsembleStats:
    """Stationary mean, second moment and CV^2 with standard errors.

    Standard errors are sample standard deviation / sqrt(n_traj), and the CV^2
    error comes from the delta method. ``workers`` > 1 runs blocks on
    threads; the output is bitwise identical for any worker count.
    """
    ensure_valid(m)
    n_traj, n_cycles_burnin = int(n_traj), int(n_cycles_burnin)
    if n_traj < MIN_TRAJECTORIES:
        raise InputError(f"n_traj must be at least {MIN_TRAJECTORIES}, got {n_traj}")
    if n_cycles_burnin < 0:
        raise InputError(f"n_cycles_burnin must be >= 0, got {n_cycles_burnin}")
    if int(workers) < 1:
        raise InputError(f"workers must be >= 1, got {workers}")
    s = _as_samplers(m, samplers)
    _warn_if_unstable(m)
    n = m.dim
    start = np.zeros(n) if x0 is None else np.array(x0, dtype=float).reshape(n)
    A_prop = _Propagator(m.dynamics.A, m.dynamics.a_hat)

    sizes = [min(BLOCK_SIZE, n_traj - lo) for lo in range(0, n_traj, BLOCK_SIZE)]

    def job(b):
        return _run_block(m, s, A_prop, sizes[b], n_cycles_burnin, seed, b, start)

    if int(workers) == 1:
        results = [job(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            results = list(pool.map(job, range(len(sizes))))

    # indexed buffers, reduced in block order
    states = np.concatenate([r[0] for r in results])
    timers = np.concatenate([r[1] for r in results])
    obs_time = np.concatenate([r[2] for r in results])
    cycle_means = sum(r[3] for r in results) / n_traj

    root_n = math.sqrt(n_traj)
    outer = states[:, :, None] * states[:, None, :]
    cv2, cv2_se = _cv2_with_se(states)
    return EnsembleStats(
        n_traj=n_traj,
        n_cycles_burnin=n_cycles_burnin,
        mean=states.mean(axis=0),
        mean_se=states.std(axis=0, ddof=1) / root_n,
        second_moment=outer.mean(axis=0),
        second_moment_se=outer.std(axis=0, ddof=1) / root_n,
        cv2=cv2,
        cv2_se=cv2_se,
        obs_time_mean=float(obs_time.mean()),
        states=states,
        timers=timers,
        cycle_means=cycle_means,
    )


__all__ = [
    "rng_stream", "ResetSampler", "AffineDeterministic", "MomentMatchedGaussian", "BinomialPartition",
    "OffsetSampler", "Samplers", "make_samplers", "Event", "Trajectory", "simulate_trajectory",
    "EnsembleStats", "estimate_stationary_moments",
]
