# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: mirrors _fallback.py exactly, only faster.

Plain Householder QR, unpivoted upper Cholesky, the square-root
covariance propagation step and the full stage-chain evaluation with
forward-mode Jacobians. No BLAS/LAPACK; matrices are tiny.
"""

import numpy as np

from libc.math cimport fabs, isfinite, sqrt

from ..errors import NotPositiveDefinite, RankDeficient

BACKEND_NAME = "compiled"


cdef double _norm_ptr(const double* v, Py_ssize_t n) noexcept nogil:
    cdef double m = 0.0, s = 0.0, t
    cdef Py_ssize_t i
    for i in range(n):
        t = fabs(v[i])
        if t > m:
            m = t
    if m == 0.0 or not isfinite(m):
        return m
    for i in range(n):
        t = v[i] / m
        s += t * t
    return m * sqrt(s)


def two_norm(v):
    """Euclidean norm with scaling so huge entries do not overflow."""
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64).ravel()
    if vv.shape[0] == 0:
        return 0.0
    return _norm_ptr(&vv[0], vv.shape[0])


def chol_upper(a):
    """Upper-triangular R with R.T @ R = a; pivot <= 0 raises."""
    a_arr = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] am = a_arr
    cdef Py_ssize_t n = am.shape[0]
    r_arr = np.zeros((n, n))
    cdef double[:, ::1] r = r_arr
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(n):
        s = am[i, i]
        for k in range(i):
            s -= r[k, i] * r[k, i]
        if s <= 0.0 or s != s:
            raise NotPositiveDefinite(f"pivot {s!r} at index {i}")
        r[i, i] = sqrt(s)
        for j in range(i + 1, n):
            s = am[i, j]
            for k in range(i):
                s -= r[k, i] * r[k, j]
            r[i, j] = s / r[i, i]
    return r_arr


cdef int _qr_r_inplace(double[:, ::1] w, double[::1] v) except -1:
    # Householder sweep; leaves R (nonnegative diagonal) in w[:n, :n].
    cdef Py_ssize_t m = w.shape[0], n = w.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double normx, alpha, vv, dot, scal
    for j in range(n):
        for i in range(j, m):
            v[i - j] = w[i, j]
        normx = _norm_ptr(&v[0], m - j)
        if normx == 0.0:
            raise RankDeficient(f"zero column norm at column {j}")
        alpha = -normx if v[0] >= 0.0 else normx
        v[0] -= alpha
        vv = 0.0
        for i in range(m - j):
            vv += v[i] * v[i]
        if vv > 0.0:
            for k in range(j + 1, n):
                dot = 0.0
                for i in range(m - j):
                    dot += v[i] * w[j + i, k]
                scal = 2.0 * dot / vv
                for i in range(m - j):
                    w[j + i, k] -= scal * v[i]
        w[j, j] = alpha
        for i in range(j + 1, m):
            w[i, j] = 0.0
    for i in range(n):
        if w[i, i] < 0.0:
            for k in range(n):
                w[i, k] = -w[i, k]
    return 0


def qr_r(a):
    """R factor (nonnegative diagonal) of a Householder QR, rows >= cols."""
    w_arr = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] w = w_arr
    cdef double[::1] v = np.empty(w.shape[0])
    _qr_r_inplace(w, v)
    return w_arr[: w.shape[1], : w.shape[1]].copy()


def propagate_sqrt(pr, u, q_fac, r_sqrt):
    """One square-root covariance step: (next factor, innovation std).

    Shares the arithmetic path of eval_problem bit for bit, so factor
    chains recomputed step by step match the chains the evaluation
    produced exactly.
    """
    cdef const double[:, ::1] prm = np.ascontiguousarray(pr, dtype=np.float64)
    cdef const double[::1] um = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, ::1] qf = np.ascontiguousarray(q_fac, dtype=np.float64)
    cdef Py_ssize_t nx = prm.shape[0]
    cdef Py_ssize_t mb = 1 + 2 * nx, nc = 1 + nx
    b_arr = np.zeros((mb, nc))
    cdef double[:, ::1] b = b_arr
    cdef double[::1] hv = np.empty(mb)
    cdef Py_ssize_t i, j
    cdef double s
    b[0, 0] = float(r_sqrt)
    for i in range(nx):
        s = 0.0
        for j in range(nx):
            s += prm[i, j] * um[j]
        b[1 + i, 0] = s
        for j in range(nx):
            b[1 + i, 1 + j] = prm[i, j]
    for i in range(nx):
        for j in range(nx):
            b[1 + nx + i, 1 + j] = qf[i, j]
    _qr_r_inplace(b, hv)
    return b_arr[1:nc, 1:nc].copy(), float(b[0, 0])


cdef void _upper_inv_c(double[:, ::1] r, double[:, ::1] inv) noexcept nogil:
    # r may have extra rows below the square factor; inv fixes the size.
    cdef Py_ssize_t n = inv.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(n):
        for j in range(n):
            inv[i, j] = 0.0
    for j in range(n - 1, -1, -1):
        inv[j, j] = 1.0 / r[j, j]
        for i in range(j - 1, -1, -1):
            s = 0.0
            for k in range(i + 1, j + 1):
                s += r[i, k] * inv[k, j]
            inv[i, j] = -s / r[i, i]


def eval_problem(u, xhat, p0r, q_fac, r_sqrt, gamma, y_max, prices, alpha, want_grad):
    """Objective, stage constraints and optional exact gradients.

    Semantics identical to the numpy fallback: forward-mode tangents are
    pushed through each QR step via dR = Phi(Q1^T dB R^{-1}) R.
    """
    u_arr = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, ::1] um = u_arr
    cdef Py_ssize_t k_stages = um.shape[0], nx = um.shape[1]
    cdef Py_ssize_t dim = k_stages * nx
    cdef Py_ssize_t mb = 1 + 2 * nx, nc = 1 + nx

    cdef const double[::1] xh = np.ascontiguousarray(xhat, dtype=np.float64)
    cdef const double[::1] pc = np.ascontiguousarray(prices, dtype=np.float64)
    cdef const double[:, ::1] qf = np.ascontiguousarray(q_fac, dtype=np.float64)
    cdef double rsq = float(r_sqrt)
    cdef double gam = float(gamma)
    cdef double ym = float(y_max)
    cdef double alf = float(alpha)
    cdef bint wg = bool(want_grad)

    factors_arr = np.empty((k_stages, nx, nx))
    backoffs_arr = np.empty(k_stages)
    g_arr = np.empty(k_stages)
    cdef double[:, :, ::1] factors = factors_arr
    cdef double[::1] backoffs = backoffs_arr
    cdef double[::1] g = g_arr

    grad_arr = np.zeros(dim) if wg else None
    jac_arr = np.zeros((k_stages, dim)) if wg else None
    cdef double[::1] grad = grad_arr if wg else np.empty(0)
    cdef double[:, ::1] jac = jac_arr if wg else np.empty((0, 0))

    cdef double[:, ::1] pr = np.array(p0r, dtype=np.float64, order="C", copy=True)
    cdef double[:, :, ::1] dpr = (
        np.zeros((dim, nx, nx)) if wg else np.empty((0, nx, nx))
    )

    # scratch
    cdef double[::1] z = np.empty(nx)
    cdef double[::1] zhat = np.empty(nx)
    cdef double[:, ::1] b = np.zeros((mb, nc))
    cdef double[::1] hv = np.empty(mb)
    cdef double[:, ::1] rinv = np.empty((nc, nc))
    cdef double[:, ::1] q1 = np.empty((nx, nc))
    cdef double[:, ::1] db = np.empty((nx, nc))
    cdef double[:, ::1] mbuf = np.empty((nc, nc))
    cdef double[:, ::1] mr = np.empty((nc, nc))
    cdef double[:, ::1] dr = np.empty((nc, nc))

    cdef double f = 0.0
    cdef Py_ssize_t k, i, j, t, c, base, nt
    cdef double nz, s, acc

    for k in range(k_stages):
        base = k * nx
        for i in range(nx):
            for j in range(nx):
                factors[k, i, j] = pr[i, j]
        for i in range(nx):
            s = 0.0
            for j in range(nx):
                s += pr[i, j] * um[k, j]
            z[i] = s
        nz = _norm_ptr(&z[0], nx)
        backoffs[k] = gam * nz
        s = 0.0
        for i in range(nx):
            s += um[k, i] * xh[i]
        g[k] = s + gam * nz - ym
        for i in range(nx):
            f += pc[i] * um[k, i]
        if alf != 0.0:
            s = 0.0
            for i in range(nx):
                for j in range(nx):
                    s += pr[i, j] * pr[i, j]
            f += alf * s
        if wg:
            for i in range(nx):
                grad[base + i] += pc[i]
                jac[k, base + i] = xh[i]
            if gam != 0.0 and nz > 0.0:
                for i in range(nx):
                    zhat[i] = z[i] / nz
                for i in range(nx):
                    s = 0.0
                    for j in range(nx):
                        s += pr[j, i] * zhat[j]
                    jac[k, base + i] += gam * s
                for t in range(base):
                    s = 0.0
                    for i in range(nx):
                        acc = 0.0
                        for j in range(nx):
                            acc += dpr[t, i, j] * um[k, j]
                        s += acc * zhat[i]
                    jac[k, t] = gam * s
            if alf != 0.0:
                for t in range(base):
                    s = 0.0
                    for i in range(nx):
                        for j in range(nx):
                            s += dpr[t, i, j] * pr[i, j]
                    grad[t] += 2.0 * alf * s
        if k == k_stages - 1:
            break

        # stack [[R^r, 0], [P^r u, P^r], [0, Q^r]] and take its R factor
        b[0, 0] = rsq
        for j in range(1, nc):
            b[0, j] = 0.0
        for i in range(nx):
            b[1 + i, 0] = z[i]
            for j in range(nx):
                b[1 + i, 1 + j] = pr[i, j]
        for i in range(nx):
            b[1 + nx + i, 0] = 0.0
            for j in range(nx):
                b[1 + nx + i, 1 + j] = qf[i, j]
        _qr_r_inplace(b, hv)

        if wg:
            nt = base + nx
            _upper_inv_c(b, rinv)  # b[:nc, :nc] holds the R factor
            for i in range(nx):
                for c in range(nc):
                    s = 0.0
                    if c == 0:
                        s = z[i] * rinv[0, 0]
                    else:
                        s = z[i] * rinv[0, c]
                        for j in range(nx):
                            s += pr[i, j] * rinv[1 + j, c]
                    q1[i, c] = s
            for t in range(nt):
                # dB rows 1..nx: col0 = dP^r u (+ P^r column for own stage)
                for i in range(nx):
                    s = 0.0
                    for j in range(nx):
                        s += dpr[t, i, j] * um[k, j]
                    db[i, 0] = s
                    for j in range(nx):
                        db[i, 1 + j] = dpr[t, i, j]
                if t >= base:
                    j = t - base
                    for i in range(nx):
                        db[i, 0] += pr[i, j]
                for i in range(nc):
                    for c in range(nc):
                        s = 0.0
                        for j in range(nx):
                            s += q1[j, i] * db[j, c]
                        mbuf[i, c] = s
                for i in range(nc):
                    for c in range(nc):
                        s = 0.0
                        for j in range(c + 1):
                            s += mbuf[i, j] * rinv[j, c]
                        mr[i, c] = s
                # Phi: keep upper, fold the strict lower into it; then dR = Phi R
                for i in range(nc):
                    for c in range(i, nc):
                        if c == i:
                            dr[i, c] = mr[i, i]
                        else:
                            dr[i, c] = mr[i, c] + mr[c, i]
                for i in range(1, nc):
                    for c in range(1, nc):
                        s = 0.0
                        for j in range(i, c + 1):
                            s += dr[i, j] * b[j, c]
                        dpr[t, i - 1, c - 1] = s
        for i in range(nx):
            for j in range(nx):
                pr[i, j] = b[1 + i, 1 + j] if j >= i else 0.0

    return f, g_arr, grad_arr, jac_arr, factors_arr, backoffs_arr
