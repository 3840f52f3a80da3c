"""Bursty protein expression with decay and random partitioning at division.

Protein count x: bursts of size U arrive at rate k (x -> x + U), decay at
rate gamma between events (dx/dt = -gamma x), and at cell division
(renewal times with law T) x is split so that E[x+ | x] = x / 2 and
Var[x+ | x] = b x.

Closed forms for the stationary mean and the three-part CV^2 decomposition
(cell-cycle timing, bursty synthesis, partitioning) are evaluated in
extended precision: every term is a ratio of quantities that vanish as
gamma <T> -> 0. Below ``small_gamma_switch`` the Laplace transforms of T
are replaced by their moment series, and gamma = 0 uses the exact limit.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import mpmath
import numpy as np

from . import distributions as dists
from . import tolerances
from .errors import DomainError, InputError
from .model import GeneralResetFamily, LinearDynamics, PDMPModel, PoissonResetFamily

_SERIES_TERMS = 8


@dataclass(frozen=True)
class ProteinModelParams:
    k: float
    U_mean: float
    gamma: float
    b: float
    T_dist: dists.InterEventDistribution
    U_second: float | None = None  # defaults to U_mean**2 (fixed burst size)

    def __post_init__(self):
        for name in ("k", "U_mean", "gamma", "b"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InputError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.k <= 0:
            raise InputError(f"burst rate k must be positive, got {self.k}")
        if self.U_mean <= 0:
            raise InputError(f"mean burst size must be positive, got {self.U_mean}")
        if self.gamma < 0:
            raise InputError(f"decay rate gamma must be >= 0, got {self.gamma}")
        if self.b < 0:
            raise InputError(f"partitioning coefficient b must be >= 0, got {self.b}")
        second = self.U_mean**2 if self.U_second is None else float(self.U_second)
        if second < self.U_mean**2 * (1 - 1e-12):
            raise InputError(f"U_second = {second} is below U_mean^2 = {self.U_mean**2}")
        object.__setattr__(self, "U_second", second)
        if not isinstance(self.T_dist, dists.InterEventDistribution):
            raise InputError("T_dist must be an inter-event distribution")

    @property
    def U_eff(self):
        """<U^2>/<U>: the burst size that enters the synthesis noise term."""
        return self.U_second / self.U_mean

    @property
    def cv2T(self):
        return self.T_dist.cv2


@dataclass(frozen=True)
class NoiseDecomposition:
    mean: float
    cc: float     # cell-cycle time randomness
    synth: float  # bursty synthesis
    part: float   # partitioning at division

    @property
    def total_cv2(self):
        return self.cc + self.synth + self.part


def build_protein_model(p: ProteinModelParams) -> PDMPModel:
    return PDMPModel(
        dynamics=LinearDynamics(a_hat=[0.0], A=[[-p.gamma]]),
        poisson=[PoissonResetFamily(rate=p.k, J=[[1.0]], R_mean=[p.U_mean], R_second=[[p.U_second]])],
        general=GeneralResetFamily(dist=p.T_dist, J=[[0.5]], B=[[p.b / 2]], C=[1.0]),
    )


# -- closed forms ------------------------------------------------------------

def _laplace_inputs(p, tol):
    """(branch, dps, s1, s2, gm) with s_c = 1 - <exp(-c gamma T)>.

    gm = gamma <T> is formed in extended precision from the same moment that
    feeds the series, so the leading-order cancellations in the closed forms
    are exact.
    """
    d = p.T_dist
    m = d.mean
    if p.gamma == 0:
        return "limit", 30, None, None, mpmath.mpf(0)
    gm_float = p.gamma * m
    if gm_float < tol.small_gamma_switch:
        dps = 30 + 4 * math.ceil(-math.log10(gm_float))
        with mpmath.workdps(dps):
            g = mpmath.mpf(p.gamma)
            moments = [mpmath.mpf(d.moment(j)) for j in range(1, _SERIES_TERMS + 1)]

            def s(c):
                return -mpmath.fsum((-c * g) ** j * moments[j - 1] / mpmath.factorial(j)
                                    for j in range(1, _SERIES_TERMS + 1))

            return "series", dps, s(1), s(2), g * moments[0]
    s1 = d.laplace_complement(p.gamma, tol)
    s2 = d.laplace_complement(2 * p.gamma, tol)
    with mpmath.workdps(50):
        return "direct", 50, mpmath.mpf(s1), mpmath.mpf(s2), mpmath.mpf(p.gamma) * mpmath.mpf(m)


def _mean_mp(p, s1, gm):
    kU = mpmath.mpf(p.k) * p.U_mean
    g = mpmath.mpf(p.gamma)
    m = gm / g
    e1 = 1 - s1
    return kU / g - kU / (2 * g**2 * m) * s1 / (1 - e1 / 2)


def _mean_limit(p):
    d = p.T_dist
    return p.k * p.U_mean * d.mean * (3.0 + d.cv2) / 2.0


def protein_mean_closed(p: ProteinModelParams, tol=None) -> float:
    """Stationary mean protein count, with its gamma -> 0 limit k<U><T>(3 + CV_T^2)/2."""
    tol = tol or tolerances.DEFAULT
    branch, dps, s1, _, gm = _laplace_inputs(p, tol)
    if branch == "limit":
        return _mean_limit(p)
    with mpmath.workdps(dps):
        return float(_mean_mp(p, s1, gm))


def protein_cv2(p: ProteinModelParams, tol=None) -> NoiseDecomposition:
    """Three-part CV^2 decomposition at finite decay rate."""
    tol = tol or tolerances.DEFAULT
    branch, dps, s1, s2, gm = _laplace_inputs(p, tol)
    if branch == "limit":
        return protein_cv2_stable_limit(p)
    with mpmath.workdps(dps):
        mean = _mean_mp(p, s1, gm)
        e1, e2 = 1 - s1, 1 - s2
        D = -s1 + 2 * gm * (1 - e1 / 2)
        cc = (-8 * (1 - e2 / 4) * s1**2 + 4 * gm * (1 - e1**2 / 4) * s2) / (8 * (1 - e2 / 4) * D**2)
        # -3 + 8 gm - e2 (2 gm - 3), rearranged so the O(1) parts cancel exactly
        synth = (1 - e1 / 2) / (8 * (1 - e2 / 4)) * (6 * gm + s2 * (2 * gm - 3)) / D * p.U_eff / mean
        part = p.b * s2 / (1 - e2 / 4) * s1 / D / mean
        return NoiseDecomposition(float(mean), float(cc), float(synth), float(part))


def protein_cv2_stable_limit(p: ProteinModelParams) -> NoiseDecomposition:
    """gamma -> 0 decomposition; depends on T only through its first three moments."""
    d = p.T_dist
    m1 = dists.raw_moment(d, 1)
    c = dists.raw_moment(d, 2) / m1**2 - 1.0
    r3 = dists.raw_moment(d, 3) / m1**3
    if not math.isfinite(r3):
        raise DomainError("stable-protein limit needs a finite third moment of T")
    mean = p.k * p.U_mean * m1 * (3.0 + c) / 2.0
    cc = 1.0 / 27.0 + 4.0 * (9.0 * r3 - 9.0 - 6.0 * c - 7.0 * c * c) / (27.0 * (3.0 + c) ** 2)
    part = 16.0 * p.b / (3.0 * (3.0 + c)) / mean
    synth = (3.0 * c + 5.0) / (3.0 * (3.0 + c)) * p.U_eff / mean
    return NoiseDecomposition(mean, cc, synth, part)


# -- sweeps -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SweepTable:
    columns: tuple
    rows: np.ndarray

    def column(self, name):
        return self.rows[:, self.columns.index(name)]

    def to_csv(self, fh=None):
        """Write with a header row; numbers use repr, so '.' is always the decimal point."""
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(float(v)) for v in row])
        if fh is None:
            return buf.getvalue()
        return None


_COMPONENTS = ("cc", "synth", "part", "total")


def _normalise(x, ref):
    return x / ref if ref != 0 else math.nan


def _sweep(base, variable, values, make_params, reference_params, hold_mean, tol):
    ref = protein_cv2(reference_params, tol)
    ref_vals = (ref.cc, ref.synth, ref.part, ref.total_cv2)
    rows = []
    for v in values:
        q = make_params(v)
        if hold_mean:
            # the mean is linear in k: rescale k to pin the mean at the reference value
            q = replace(q, k=q.k * ref.mean / protein_mean_closed(q, tol))
        dec = protein_cv2(q, tol)
        vals = (dec.cc, dec.synth, dec.part, dec.total_cv2)
        rows.append([v, q.k, dec.mean, *vals, *(_normalise(x, r) for x, r in zip(vals, ref_vals))])
    columns = (variable, "k", "mean", *_COMPONENTS, *(c + "_norm" for c in _COMPONENTS))
    return SweepTable(columns, np.array(rows, dtype=float))


def default_cv2T_grid():
    return np.linspace(0.0, 1.0, 11)


def default_gamma_grid(mean_T):
    return np.linspace(0.0, 1.0, 11) / mean_T


def sweep_noise_vs_cvT(p: ProteinModelParams, cv2T_grid=None, hold_mean=True, tol=None) -> SweepTable:
    """Noise components against CV_T^2 for gamma-distributed T with fixed <T>.

    Components are normalised to their value at CV_T^2 = 0 (deterministic T).
    With ``hold_mean`` the burst rate is rescaled so every row has the same
    mean protein count as that reference.
    """
    m = p.T_dist.mean
    grid = default_cv2T_grid() if cv2T_grid is None else np.asarray(cv2T_grid, dtype=float)
    if np.any(grid < 0):
        raise InputError("CV_T^2 grid values must be >= 0")

    def law(c):
        return dists.Deterministic(m) if c == 0 else dists.Gamma.from_mean_cv2(m, c)

    return _sweep(p, "cv2T", grid, lambda c: replace(p, T_dist=law(c)),
                  replace(p, T_dist=dists.Deterministic(m)), hold_mean, tol)


def sweep_noise_vs_gamma(p: ProteinModelParams, gamma_grid=None, hold_mean=True, tol=None) -> SweepTable:
    """Noise components against the decay rate, normalised to gamma = 0."""
    grid = default_gamma_grid(p.T_dist.mean) if gamma_grid is None else np.asarray(gamma_grid, dtype=float)
    if np.any(grid < 0):
        raise InputError("gamma grid values must be >= 0")
    return _sweep(p, "gamma", grid, lambda g: replace(p, gamma=float(g)),
                  replace(p, gamma=0.0), hold_mean, tol)


PRESETS = {
    "protein": ProteinModelParams(k=10.0, U_mean=1.0, gamma=0.0, b=0.25, T_dist=dists.Deterministic(1.0)),
}
