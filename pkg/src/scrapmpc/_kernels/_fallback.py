"""Pure numpy implementation of the hot kernels.

Selected at import time when the compiled extension is unavailable (or
forced via ``SCRAPMPC_PURE_PYTHON=1``). Signatures and semantics match
``_core.pyx`` exactly; only the speed differs.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NotPositiveDefinite, RankDeficient

BACKEND_NAME = "python"


def two_norm(v):
    """Euclidean norm with scaling so 1e200-sized entries do not overflow."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return 0.0
    m = float(np.max(np.abs(v)))
    if m == 0.0 or math.isinf(m) or math.isnan(m):
        return m
    return m * math.sqrt(float(np.sum((v / m) ** 2)))


def chol_upper(a):
    """Upper-triangular Cholesky factor R with R.T @ R = a.

    Reads only the upper triangle of ``a``; raises NotPositiveDefinite
    on a pivot <= 0. The result has exact zeros below the diagonal and a
    nonnegative diagonal.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    r = np.zeros((n, n))
    for i in range(n):
        s = a[i, i] - float(r[:i, i] @ r[:i, i])
        if s <= 0.0 or math.isnan(s):
            raise NotPositiveDefinite(f"pivot {s!r} at index {i}")
        r[i, i] = math.sqrt(s)
        if i + 1 < n:
            r[i, i + 1 :] = (a[i, i + 1 :] - r[:i, i] @ r[:i, i + 1 :]) / r[i, i]
    return r


def qr_r(a):
    """R factor of a Householder QR of a tall matrix, nonnegative diagonal.

    The orthogonal factor is never formed. Raises RankDeficient when a
    Householder column norm underflows to zero.
    """
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    w = a.copy()
    for j in range(n):
        x = w[j:, j]
        normx = two_norm(x)
        if normx == 0.0:
            raise RankDeficient(f"zero column norm at column {j}")
        alpha = -normx if x[0] >= 0.0 else normx
        v = x.copy()
        v[0] -= alpha
        vv = float(v @ v)
        if vv > 0.0:
            w[j:, j + 1 :] -= np.outer(v, (2.0 / vv) * (v @ w[j:, j + 1 :]))
        w[j, j] = alpha
        w[j + 1 :, j] = 0.0
    r = w[:n, :n].copy()
    flip = r.diagonal() < 0.0
    r[flip] = -r[flip]
    return r


def _upper_inv(r):
    """Inverse of a small upper-triangular matrix by back substitution."""
    n = r.shape[0]
    inv = np.zeros((n, n))
    for j in range(n - 1, -1, -1):
        inv[j, j] = 1.0 / r[j, j]
        for i in range(j - 1, -1, -1):
            inv[i, j] = -(r[i, i + 1 : j + 1] @ inv[i + 1 : j + 1, j]) / r[i, i]
    return inv


def _stack_block(pr, z, q_fac, r_sqrt, nx):
    b = np.zeros((1 + 2 * nx, 1 + nx))
    b[0, 0] = r_sqrt
    b[1 : 1 + nx, 0] = z
    b[1 : 1 + nx, 1:] = pr
    b[1 + nx :, 1:] = q_fac
    return b


def propagate_sqrt(pr, u, q_fac, r_sqrt):
    """One square-root covariance propagation step.

    Stacks [[R^r, 0], [P^r u, P^r], [0, Q^r]], takes the QR R-factor and
    returns (next upper factor, innovation standard deviation).
    """
    pr = np.asarray(pr, dtype=float)
    u = np.asarray(u, dtype=float)
    nx = pr.shape[0]
    b = _stack_block(pr, pr @ u, np.asarray(q_fac, dtype=float), float(r_sqrt), nx)
    rf = qr_r(b)
    return rf[1:, 1:].copy(), float(rf[0, 0])


def eval_problem(u, xhat, p0r, q_fac, r_sqrt, gamma, y_max, prices, alpha, want_grad):
    """Objective, stage constraints and (optionally) exact gradients.

    ``u`` has shape (K, nx): one control row per stage. The predicted
    factor chain starts at ``p0r`` and advances through the square-root
    propagation; stage k's pollutant constraint and the uncertainty cost
    read the factor *before* the stage-k propagation. Gradients follow
    forward-mode tangents through the QR step via the thin-QR identity
    dR = Phi(Q1^T dB R^{-1}) R with Phi copying the upper triangle and
    symmetrizing the strict lower one into it.

    Returns (f, g, grad_f, jac, factors, backoffs); grad_f and jac are
    None when ``want_grad`` is false.
    """
    u = np.asarray(u, dtype=float)
    k_stages, nx = u.shape
    dim = k_stages * nx
    xhat = np.asarray(xhat, dtype=float)
    prices = np.asarray(prices, dtype=float)
    pr = np.array(p0r, dtype=float)
    q_fac = np.asarray(q_fac, dtype=float)

    factors = np.empty((k_stages, nx, nx))
    backoffs = np.empty(k_stages)
    g = np.empty(k_stages)
    f = 0.0
    grad = np.zeros(dim) if want_grad else None
    jac = np.zeros((k_stages, dim)) if want_grad else None
    dpr = np.zeros((dim, nx, nx)) if want_grad else None

    for k in range(k_stages):
        uk = u[k]
        factors[k] = pr
        z = pr @ uk
        nz = two_norm(z)
        backoffs[k] = gamma * nz
        g[k] = float(uk @ xhat) + gamma * nz - y_max
        f += float(prices @ uk)
        if alpha != 0.0:
            f += alpha * float(np.sum(pr * pr))
        base = k * nx
        if want_grad:
            sl = slice(base, base + nx)
            grad[sl] += prices
            jac[k, sl] = xhat
            if gamma != 0.0 and nz > 0.0:
                zhat = z / nz
                jac[k, sl] += gamma * (pr.T @ zhat)
                if base > 0:
                    jac[k, :base] = gamma * ((dpr[:base] @ uk) @ zhat)
            if alpha != 0.0 and base > 0:
                grad[:base] += (2.0 * alpha) * np.einsum(
                    "tij,ij->t", dpr[:base], pr
                )
        if k == k_stages - 1:
            break

        b = _stack_block(pr, z, q_fac, r_sqrt, nx)
        rf = qr_r(b)
        pr_next = rf[1:, 1:].copy()
        if want_grad:
            nt = base + nx
            rinv = _upper_inv(rf)
            q1_rows = (b @ rinv)[1 : 1 + nx]  # the only rows dB touches
            db = np.zeros((nt, nx, 1 + nx))
            db[:, :, 0] = dpr[:nt] @ uk
            db[base:nt, :, 0] += pr.T
            db[:, :, 1:] = dpr[:nt]
            m = np.matmul(q1_rows.T[None, :, :], db) @ rinv
            phi = np.triu(m) + np.triu(np.transpose(m, (0, 2, 1)), 1)
            dpr[:nt] = (phi @ rf)[:, 1:, 1:]
        pr = pr_next

    return f, g, grad, jac, factors, backoffs
