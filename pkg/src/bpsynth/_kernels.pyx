# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops for the Gibbs sweep.

Both kernels consume pre-drawn standard normal variates so that the
compiled and the numpy implementations (``_fallback``) compute the same
draws from the same random stream.
"""
import numpy as np
from libc.math cimport sqrt

from .errors import NumericalError

cdef double JITTER_START = 1e-10
cdef double JITTER_MAX = 1e-6


cdef int _chol(double[:, ::1] A, double[:, ::1] L, Py_ssize_t n, double jitter) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(n):
        s = A[j, j] + jitter
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not (s > 0.0):
            return -1
        L[j, j] = sqrt(s)
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
        for i in range(j):
            L[i, j] = 0.0
    return 0


cdef int _chol_jitter(double[:, ::1] A, double[:, ::1] L, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double base = 0.0, scale
    if _chol(A, L, n, 0.0) == 0:
        return 0
    for i in range(n):
        base += A[i, i]
    base /= n
    if not (base > 0.0):
        return -1
    scale = JITTER_START
    while scale <= JITTER_MAX * (1.0 + 1e-9):
        if _chol(A, L, n, scale * base) == 0:
            return 0
        scale *= 10.0
    return -1


cdef void _solve_lower(double[:, ::1] L, double[::1] b, Py_ssize_t n) noexcept nogil:
    # in place: b <- L^{-1} b
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * b[k]
        b[i] = s / L[i, i]


cdef void _solve_upper_t(double[:, ::1] L, double[::1] b, Py_ssize_t n) noexcept nogil:
    # in place: b <- L'^{-1} b
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= L[k, i] * b[k]
        b[i] = s / L[i, i]


cdef bint _all_zero(double[:, ::1] A, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(n):
            if A[i, j] != 0.0:
                return False
    return True


def theta_ffbs(double[:, ::1] y, double[:, :, ::1] X, double[:, :, ::1] V,
               double[::1] m0, double[:, ::1] C0, double delta, double[:, ::1] z):
    """Forward filter then backward sample the coefficient path.

    Returns ``(theta, m, C)`` with ``theta`` of shape (T+1, p) for t=0..T and
    the filtered moments ``m`` (T+1, p), ``C`` (T+1, p, p).
    """
    cdef Py_ssize_t T = y.shape[0], q = y.shape[1], J = X.shape[1]
    cdef Py_ssize_t Jp1 = J + 1, p = (J + 1) * q
    cdef Py_ssize_t t, i, k, r, s, j, base
    cdef double acc, inv_delta = 1.0 / delta, sd

    m_arr = np.empty((T + 1, p))
    C_arr = np.empty((T + 1, p, p))
    cdef double[:, ::1] m = m_arr
    cdef double[:, :, ::1] C = C_arr
    cdef double[:, ::1] R = np.empty((p, p))
    cdef double[:, ::1] RFt = np.empty((p, q))
    cdef double[:, ::1] A = np.empty((p, q))
    cdef double[:, ::1] Q = np.empty((q, q))
    cdef double[:, ::1] LQ = np.empty((q, q))
    cdef double[:, ::1] Lc = np.empty((p, p))
    cdef double[:, ::1] Cs = np.empty((p, p))
    cdef double[::1] e = np.empty(q)
    cdef double[::1] row = np.empty(q)
    theta_arr = np.empty((T + 1, p))
    cdef double[:, ::1] theta = theta_arr

    for i in range(p):
        m[0, i] = m0[i]
        for k in range(p):
            C[0, i, k] = 0.5 * (C0[i, k] + C0[k, i])

    for t in range(1, T + 1):
        for i in range(p):
            for k in range(p):
                R[i, k] = C[t - 1, i, k] * inv_delta
        # RFt = R F'
        for i in range(p):
            for r in range(q):
                base = r * Jp1
                acc = R[i, base]
                for j in range(J):
                    acc += X[t - 1, j, r] * R[i, base + 1 + j]
                RFt[i, r] = acc
        # f, e
        for r in range(q):
            base = r * Jp1
            acc = m[t - 1, base]
            for j in range(J):
                acc += X[t - 1, j, r] * m[t - 1, base + 1 + j]
            e[r] = y[t - 1, r] - acc
        # Q = F R F' + V
        for r in range(q):
            for s in range(q):
                base = s * Jp1
                acc = RFt[base, r]
                for j in range(J):
                    acc += X[t - 1, j, s] * RFt[base + 1 + j, r]
                Q[r, s] = acc + V[t - 1, r, s]
        for r in range(q):
            for s in range(r):
                acc = 0.5 * (Q[r, s] + Q[s, r])
                Q[r, s] = acc
                Q[s, r] = acc
        if _chol_jitter(Q, LQ, q) != 0:
            raise NumericalError(f"one-step forecast covariance singular at t={t}")
        # A = RFt Q^{-1}, row by row
        for i in range(p):
            for r in range(q):
                row[r] = RFt[i, r]
            _solve_lower(LQ, row, q)
            _solve_upper_t(LQ, row, q)
            for r in range(q):
                A[i, r] = row[r]
        for i in range(p):
            acc = m[t - 1, i]
            for r in range(q):
                acc += A[i, r] * e[r]
            m[t, i] = acc
        # C = R - RFt A'
        for i in range(p):
            for k in range(i + 1):
                acc = 0.0
                for r in range(q):
                    acc += RFt[i, r] * A[k, r] + RFt[k, r] * A[i, r]
                acc = 0.5 * (R[i, k] + R[k, i]) - 0.5 * acc
                C[t, i, k] = acc
                C[t, k, i] = acc

    # backward sampling
    for i in range(p):
        for k in range(p):
            Cs[i, k] = C[T, i, k]
    if _all_zero(Cs, p):
        for i in range(p):
            theta[T, i] = m[T, i]
    else:
        if _chol_jitter(Cs, Lc, p) != 0:
            raise NumericalError(f"filtered covariance not positive definite at t={T}")
        for i in range(p):
            acc = m[T, i]
            for k in range(i + 1):
                acc += Lc[i, k] * z[T, k]
            theta[T, i] = acc
    for t in range(T - 1, -1, -1):
        for i in range(p):
            theta[t, i] = m[t, i] + delta * (theta[t + 1, i] - m[t, i])
        if delta >= 1.0:
            continue
        for i in range(p):
            for k in range(p):
                Cs[i, k] = C[t, i, k]
        if _all_zero(Cs, p):
            continue
        if _chol_jitter(Cs, Lc, p) != 0:
            raise NumericalError(f"filtered covariance not positive definite at t={t}")
        sd = sqrt(1.0 - delta)
        for i in range(p):
            acc = 0.0
            for k in range(i + 1):
                acc += Lc[i, k] * z[t, k]
            theta[t, i] += sd * acc
    return theta_arr, m_arr, C_arr


def gaussian_states(double[:, ::1] y, double[:, ::1] theta, double[:, :, ::1] Vinv,
                    double[:, :, :, ::1] prior_prec, double[:, :, ::1] prior_lin,
                    double[:, ::1] phi, double[:, ::1] z):
    """Draw vec(X_t) from its Gaussian full conditional for every t.

    ``theta`` holds theta_1..theta_T (shape (T, p)); agent j's prior
    precision at t is ``phi[t, j] * prior_prec[t, j]`` and the matching
    linear term ``phi[t, j] * prior_lin[t, j]``.
    """
    cdef Py_ssize_t T = y.shape[0], q = y.shape[1], J = prior_lin.shape[1]
    cdef Py_ssize_t n = J * q, Jp1 = J + 1
    cdef Py_ssize_t t, j, k, r, s, a, b
    cdef double acc, wr, ph

    X_arr = np.empty((T, J, q))
    cdef double[:, :, ::1] Xo = X_arr
    cdef double[:, ::1] P = np.empty((n, n))
    cdef double[:, ::1] L = np.empty((n, n))
    cdef double[::1] bvec = np.empty(n)
    cdef double[::1] zz = np.empty(n)
    cdef double[::1] resid = np.empty(q)
    cdef double[::1] vres = np.empty(q)

    for t in range(T):
        for r in range(q):
            resid[r] = y[t, r] - theta[t, r * Jp1]
        for r in range(q):
            acc = 0.0
            for s in range(q):
                acc += Vinv[t, r, s] * resid[s]
            vres[r] = acc
        for j in range(J):
            ph = phi[t, j]
            for r in range(q):
                a = j * q + r
                wr = theta[t, r * Jp1 + 1 + j]
                bvec[a] = ph * prior_lin[t, j, r] + wr * vres[r]
                for k in range(J):
                    for s in range(q):
                        b = k * q + s
                        acc = wr * Vinv[t, r, s] * theta[t, s * Jp1 + 1 + k]
                        if k == j:
                            acc += ph * prior_prec[t, j, r, s]
                        P[a, b] = acc
        for a in range(n):
            for b in range(a):
                acc = 0.5 * (P[a, b] + P[b, a])
                P[a, b] = acc
                P[b, a] = acc
        if _chol_jitter(P, L, n) != 0:
            raise NumericalError(f"latent-state posterior precision singular at t={t + 1}")
        _solve_lower(L, bvec, n)
        for a in range(n):
            zz[a] = bvec[a] + z[t, a]
        _solve_upper_t(L, zz, n)
        for j in range(J):
            for r in range(q):
                Xo[t, j, r] = zz[j * q + r]
    return X_arr


cdef int _inv_from_chol(double[:, ::1] L, double[:, ::1] out, double[::1] col,
                        Py_ssize_t n) noexcept nogil:
    # out <- (L L')^{-1}, symmetric
    cdef Py_ssize_t i, k
    for k in range(n):
        for i in range(n):
            col[i] = 1.0 if i == k else 0.0
        _solve_lower(L, col, n)
        _solve_upper_t(L, col, n)
        for i in range(n):
            out[i, k] = col[i]
    for i in range(n):
        for k in range(i):
            out[i, k] = 0.5 * (out[i, k] + out[k, i])
            out[k, i] = out[i, k]
    return 0


def vol_backward(double[:, :, ::1] D, double beta, double[:, :, ::1] A):
    """Backward pass of the discount volatility sampler.

    ``A[t]`` is the Bartlett (or singular) factor of the Wishart draw at t,
    so the draw is ``L A A' L'`` with ``L = chol(D_t^{-1})``. The precision
    recursion is ``P_T = W_T``, ``P_t = beta P_{t+1} + W_t``. Returns
    ``(V, V_inv)`` of shape (T+1, q, q).
    """
    cdef Py_ssize_t T1 = D.shape[0], q = D.shape[1]
    cdef Py_ssize_t t, i, k, r
    cdef double acc
    V_arr = np.empty((T1, q, q))
    P_arr = np.empty((T1, q, q))
    cdef double[:, :, ::1] Vo = V_arr
    cdef double[:, :, ::1] P = P_arr
    cdef double[:, ::1] M = np.empty((q, q))
    cdef double[:, ::1] L = np.empty((q, q))
    cdef double[:, ::1] Dinv = np.empty((q, q))
    cdef double[:, ::1] LA = np.empty((q, q))
    cdef double[::1] col = np.empty(q)

    for t in range(T1 - 1, -1, -1):
        for i in range(q):
            for k in range(q):
                M[i, k] = 0.5 * (D[t, i, k] + D[t, k, i])
        if _chol_jitter(M, L, q) != 0:
            raise NumericalError(f"D^{{-1}}[{t}] not positive definite")
        _inv_from_chol(L, Dinv, col, q)
        if _chol_jitter(Dinv, L, q) != 0:
            raise NumericalError(f"D^{{-1}}[{t}] not positive definite")
        for i in range(q):
            for k in range(q):
                acc = 0.0
                for r in range(i + 1):
                    acc += L[i, r] * A[t, r, k]
                LA[i, k] = acc
        for i in range(q):
            for k in range(i + 1):
                acc = 0.0
                for r in range(q):
                    acc += LA[i, r] * LA[k, r]
                if t < T1 - 1:
                    acc += beta * P[t + 1, i, k]
                P[t, i, k] = acc
                P[t, k, i] = acc
        for i in range(q):
            for k in range(q):
                M[i, k] = P[t, i, k]
        if _chol(M, L, q, 0.0) != 0:
            raise NumericalError("sampled precision matrix not positive definite")
        _inv_from_chol(L, M, col, q)
        for i in range(q):
            for k in range(q):
                Vo[t, i, k] = M[i, k]
    return V_arr, P_arr
