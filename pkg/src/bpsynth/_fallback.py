"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Signatures and results match the compiled module; only speed differs.
"""
import numpy as np
from scipy.signal import lfilter

from ._linalg import chol_jitter, psd_factor, symmetrize
from .errors import NumericalError


def design_matrix(x):
    """Design matrix F (q x (J+1)q) from a J x q latent-state matrix."""
    J, q = x.shape
    F = np.zeros((q, (J + 1) * q))
    for r in range(q):
        F[r, r * (J + 1)] = 1.0
        F[r, r * (J + 1) + 1:(r + 1) * (J + 1)] = x[:, r]
    return F


def theta_ffbs(y, X, V, m0, C0, delta, z):
    T, q = y.shape
    J = X.shape[1]
    p = (J + 1) * q
    m = np.empty((T + 1, p))
    C = np.empty((T + 1, p, p))
    m[0] = m0
    C[0] = symmetrize(C0)
    for t in range(1, T + 1):
        F = design_matrix(X[t - 1])
        R = C[t - 1] / delta
        RFt = R @ F.T
        e = y[t - 1] - F @ m[t - 1]
        Q = symmetrize(F @ RFt + V[t - 1])
        try:
            LQ = chol_jitter(Q, "one-step forecast covariance")
        except NumericalError as exc:
            raise NumericalError(f"one-step forecast covariance singular at t={t}") from exc
        A = np.linalg.solve(LQ.T, np.linalg.solve(LQ, RFt.T)).T
        m[t] = m[t - 1] + A @ e
        C[t] = symmetrize(R) - symmetrize(RFt @ A.T)

    theta = np.empty((T + 1, p))
    theta[T] = m[T] + _factor(C[T], T) @ z[T]
    for t in range(T - 1, -1, -1):
        theta[t] = m[t] + delta * (theta[t + 1] - m[t])
        if delta < 1.0:
            theta[t] += np.sqrt(1.0 - delta) * (_factor(C[t], t) @ z[t])
    return theta, m, C


def _factor(C, t):
    try:
        return psd_factor(C)
    except NumericalError as exc:
        raise NumericalError(f"filtered covariance not positive definite at t={t}") from exc


def gaussian_states(y, theta, Vinv, prior_prec, prior_lin, phi, z):
    T, q = y.shape
    J = prior_lin.shape[1]
    n = J * q
    th = theta.reshape(T, q, J + 1)
    intercept = th[:, :, 0]
    w = th[:, :, 1:]                                     # (T, q, J)
    vres = np.einsum("trs,ts->tr", Vinv, y - intercept)  # (T, q)
    # likelihood precision over (j, r) x (k, s)
    lik = np.einsum("trj,trs,tsk->tjrks", w, Vinv, w).reshape(T, n, n)
    prior = np.zeros((T, J, q, J, q))
    for j in range(J):
        prior[:, j, :, j, :] = phi[:, j, None, None] * prior_prec[:, j]
    P = symmetrize(lik + prior.reshape(T, n, n))
    b = (phi[:, :, None] * prior_lin + np.swapaxes(w, 1, 2) * vres[:, None, :]).reshape(T, n)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        L = np.empty_like(P)
        for t in range(T):
            try:
                L[t] = chol_jitter(P[t])
            except NumericalError as exc:
                raise NumericalError(
                    f"latent-state posterior precision singular at t={t + 1}") from exc
    u = np.linalg.solve(L, b[..., None])[..., 0] + z
    out = np.linalg.solve(np.swapaxes(L, 1, 2), u[..., None])[..., 0]
    return out.reshape(T, J, q)


def _inverse_chols(D):
    """Cholesky factors of ``D_t^{-1}`` for a stack of PD matrices."""
    Dinv = symmetrize(np.linalg.inv(symmetrize(D)))
    try:
        return np.linalg.cholesky(Dinv)
    except np.linalg.LinAlgError:
        out = np.empty_like(Dinv)
        for t, M in enumerate(Dinv):
            try:
                out[t] = chol_jitter(M)
            except NumericalError as exc:
                raise NumericalError(f"D^{{-1}}[{t}] not positive definite") from exc
        return out


def vol_backward(D, beta, A):
    LA = _inverse_chols(D) @ A
    W = symmetrize(LA @ np.swapaxes(LA, 1, 2))
    # P_t = beta P_{t+1} + W_t, run backward from P_T = W_T
    P = symmetrize(lfilter([1.0], [1.0, -beta], W[::-1], axis=0)[::-1])
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise NumericalError("sampled precision matrix not positive definite") from None
    Linv = np.linalg.inv(L)
    return symmetrize(np.swapaxes(Linv, 1, 2) @ Linv), P
