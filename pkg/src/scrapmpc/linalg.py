"""Minimal dense linear algebra for the filter and solver.

Matrices are plain float64 numpy arrays. Upper-triangular factors follow
one fixed convention throughout the package: exact zeros below the
diagonal and a nonnegative diagonal, so that square-root factors are
unique and comparable in tests. Everything here is hand-rolled (plain
Householder reflections, unpivoted Cholesky); matrices in this problem
are tiny and well conditioned.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import Asymmetric, DimensionMismatch, NonFinite

SYMMETRY_RTOL = 1e-12


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} contains NaN or Inf entries")
    return a


def cholesky_upper(a) -> np.ndarray:
    """Upper-triangular R with R.T @ R = a for symmetric positive-definite a.

    Raises Asymmetric when the relative symmetry defect exceeds 1e-12 and
    NotPositiveDefinite when a pivot of at most zero is encountered.
    """
    a = _as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"a must be square, got shape {a.shape}")
    scale = float(np.max(np.abs(a)))
    if scale > 0.0:
        defect = float(np.max(np.abs(a - a.T)))
        if defect > SYMMETRY_RTOL * scale:
            raise Asymmetric(
                f"symmetry defect {defect:.3e} exceeds {SYMMETRY_RTOL:.0e} * {scale:.3e}"
            )
    return _kernels.chol_upper(a)


def qr_r_factor(a) -> np.ndarray:
    """R factor (cols x cols, nonnegative diagonal) of a QR decomposition.

    Only the triangular factor is formed; the orthogonal factor is applied
    implicitly and discarded. Requires rows >= cols.
    """
    a = _as_matrix(a, "a")
    if a.shape[0] < a.shape[1]:
        raise DimensionMismatch(
            f"need rows >= cols for the R factor, got shape {a.shape}"
        )
    return _kernels.qr_r(a)


def two_norm(v) -> float:
    """Euclidean norm, scaled to avoid overflow for huge entries."""
    return _kernels.two_norm(np.asarray(v, dtype=float))


def psd_upper_factor(a, zero_tol: float = 0.0) -> np.ndarray:
    """Upper-triangular factor of a symmetric positive *semi*definite matrix.

    Like :func:`cholesky_upper` but a pivot within ``zero_tol`` of zero
    (relative to the largest diagonal entry) produces a zero row instead of
    an error. Used for noise covariances that may be exactly singular,
    e.g. a zero process-noise matrix.
    """
    a = _as_matrix(a, "a")
    n = a.shape[0]
    diag_scale = float(np.max(np.abs(np.diag(a)))) if n else 0.0
    tol = zero_tol * diag_scale if diag_scale > 0.0 else 0.0
    r = np.zeros((n, n))
    for i in range(n):
        s = a[i, i] - float(r[:i, i] @ r[:i, i])
        if s <= tol:
            if s < -max(tol, 1e-12 * max(diag_scale, 1.0)):
                from .errors import NotPositiveDefinite

                raise NotPositiveDefinite(f"pivot {s!r} at index {i}")
            r[i, i] = 0.0
            continue
        r[i, i] = np.sqrt(s)
        if i + 1 < n:
            r[i, i + 1 :] = (a[i, i + 1 :] - r[:i, i] @ r[:i, i + 1 :]) / r[i, i]
    return r


def solve_upper(r, b) -> np.ndarray:
    """Solve R x = b for upper-triangular R by back substitution."""
    r = np.asarray(r, dtype=float)
    b = np.asarray(b, dtype=float)
    n = r.shape[0]
    x = b.astype(float).copy()
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - r[i, i + 1 :] @ x[i + 1 :]) / r[i, i]
    return x


def solve_upper_t(r, b) -> np.ndarray:
    """Solve R.T x = b for upper-triangular R by forward substitution."""
    r = np.asarray(r, dtype=float)
    b = np.asarray(b, dtype=float)
    n = r.shape[0]
    x = b.astype(float).copy()
    for i in range(n):
        x[i] = (x[i] - r[:i, i] @ x[:i]) / r[i, i]
    return x
