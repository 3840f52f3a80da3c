"""Dense real linear-algebra kernels.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 (C / row-major
storage). ``vec`` uses the column-stacking convention, so that

    vec(M1 @ M2 @ M3) == kron(M3.T, M1) @ vec(M2)

holds exactly as written.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, DomainError, InputError, LinalgOverflowError


def as_matrix(M, name="matrix"):
    M = np.array(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2:
        raise InputError(f"{name} must be two-dimensional, got shape {M.shape}")
    return M


def as_vector(v, name="vector"):
    v = np.array(v, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim == 2 and 1 in v.shape:
        v = v.reshape(-1)
    if v.ndim != 1:
        raise InputError(f"{name} must be one-dimensional, got shape {v.shape}")
    return v


def _require_square(M, name="matrix"):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"{name} must be square, got shape {M.shape}")


def vec(M):
    """Stack the columns of a square matrix into one vector."""
    M = as_matrix(M)
    _require_square(M)
    return M.reshape(-1, order="F").copy()


def unvec(v, n):
    """Inverse of :func:`vec`."""
    v = as_vector(v)
    if v.size != n * n:
        raise InputError(f"cannot unvec a vector of length {v.size} into {n}x{n}")
    return v.reshape((n, n), order="F").copy()


def kron(M1, M2):
    """Kronecker product; block (i, j) equals ``M1[i, j] * M2``."""
    return np.kron(as_matrix(M1), as_matrix(M2))


def expm(M):
    """Matrix exponential.

    Scaling and squaring with a Pade approximant (scipy's implementation of
    the Al-Mohy/Higham algorithm). Non-finite output raises instead of
    returning ``inf``.
    """
    M = as_matrix(M)
    _require_square(M)
    if not np.all(np.isfinite(M)):
        raise InputError("expm: input has non-finite entries")
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(M)
    if not np.all(np.isfinite(E)):
        raise LinalgOverflowError(
            f"expm overflowed (max |entry| of input {np.abs(M).max():.3g})"
        )
    return E


def augmented(A, a):
    """The (n+1)x(n+1) matrix [[A, a], [0, 0]]."""
    A = as_matrix(A)
    a = as_vector(a)
    n = A.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n] = a
    return M


def flow_with_integral(A, a, t):
    """Return ``(e^{At}, int_0^t e^{As} a ds)``.

    Both come out of one exponential of [[A, a], [0, 0]] * t, so singular
    ``A`` needs no special casing.
    """
    if t < 0:
        raise DomainError(f"flow_with_integral: negative time {t}")
    A = as_matrix(A)
    _require_square(A)
    n = A.shape[0]
    E = expm(augmented(A, a) * t)
    return E[:n, :n], E[:n, n].copy()


def spectral_radius(M):
    """Largest eigenvalue modulus, from LAPACK's full eigensolver (geev)."""
    M = as_matrix(M)
    _require_square(M)
    if M.size == 0:
        return 0.0
    try:
        w = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(
            f"eigenvalue iteration failed for a {M.shape[0]}x{M.shape[0]} "
            f"matrix with norm {np.linalg.norm(M):.3g}: {exc}"
        ) from exc
    return float(np.max(np.abs(w)))


def spectral_abscissa(M):
    M = as_matrix(M)
    if M.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(M).real))
