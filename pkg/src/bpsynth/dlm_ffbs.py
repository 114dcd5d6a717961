"""Forward filtering and backward sampling for the synthesis coefficients.

The coefficient vector for q series and J agents has length (J+1)q and is
ordered series by series: for series r the block holds an intercept followed
by the J agent weights. The evolution is a random walk whose innovation
variance is implied by a single discount factor, ``R_t = C_{t-1} / delta``.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._fallback import design_matrix
from ._linalg import chol_jitter, chol_solve, psd_factor, symmetrize
from .errors import NumericalError

__all__ = [
    "DiscountConfig",
    "ThetaFilterStats",
    "design_matrix",
    "coef_index",
    "forward_filter_step",
    "backward_sample_theta",
    "sample_theta_path",
]


@dataclass(frozen=True)
class DiscountConfig:
    delta: float = 0.99
    beta: float = 0.99

    def __post_init__(self):
        for name in ("delta", "beta"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise ValueError(f"discount {name} must lie in (0, 1], got {val}")


@dataclass
class ThetaFilterStats:
    """On-line moments at one time point.

    Only ``m`` and ``C`` are needed to continue filtering; the remaining
    fields are the intermediate quantities of the step that produced them
    and are ``None`` for the initial prior.
    """

    m: np.ndarray
    C: np.ndarray
    R: np.ndarray | None = None
    f: np.ndarray | None = None
    Q: np.ndarray | None = None
    e: np.ndarray | None = None
    A: np.ndarray | None = None


def coef_index(r, j, n_agents):
    """Position in the coefficient vector of series ``r``'s weight on agent ``j``.

    ``j = -1`` addresses the intercept.
    """
    return r * (n_agents + 1) + 1 + j


def _check_pd(M, what):
    try:
        np.linalg.cholesky(symmetrize(M))
    except np.linalg.LinAlgError:
        raise NumericalError(f"{what} is not positive definite") from None


def forward_filter_step(prev, F, y, V, delta):
    """One filtering update: time t-1 posterior to time t posterior.

    Parameters
    ----------
    prev : ThetaFilterStats
        Posterior moments ``(m, C)`` at t-1.
    F : ndarray, shape (q, p)
        Design matrix at t.
    y : ndarray, shape (q,)
        Observation at t.
    V : ndarray, shape (q, q)
        Observation covariance at t.
    delta : float
        Coefficient discount factor in (0, 1].
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    m, C = np.asarray(prev.m, dtype=float), np.asarray(prev.C, dtype=float)
    q, p = F.shape
    if m.shape != (p,) or C.shape != (p, p) or y.shape != (q,) or V.shape != (q, q):
        raise ValueError(
            f"dimension mismatch: F {F.shape}, m {m.shape}, C {C.shape}, "
            f"y {y.shape}, V {V.shape}")
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    _check_pd(V, "observation covariance V")
    if np.any(C):
        _check_pd(C, "previous posterior covariance C")

    R = symmetrize(C / delta)
    f = F @ m
    Q = symmetrize(F @ R @ F.T + V)
    try:
        LQ = chol_jitter(Q, "one-step forecast covariance Q")
    except NumericalError as exc:
        raise NumericalError(f"{exc}; agent states are likely degenerate") from None
    e = y - f
    A = chol_solve(LQ, F @ R).T
    m_new = m + A @ e
    C_new = symmetrize(R - A @ Q @ A.T)
    return ThetaFilterStats(m=m_new, C=C_new, R=R, f=f, Q=Q, e=e, A=A)


def backward_sample_theta(stats, prior, delta, rng):
    """Draw theta_0..theta_T given the filtered moments.

    ``stats`` holds the filter output for t=1..T and ``prior`` is
    ``(m_0, C_0)``. Standard normals are drawn in one block of shape
    (T+1, p) so that the fused path :func:`sample_theta_path` reproduces the
    same draw from the same generator.
    """
    m0, C0 = prior
    ms = [np.asarray(m0, dtype=float)] + [s.m for s in stats]
    Cs = [np.asarray(C0, dtype=float)] + [s.C for s in stats]
    T = len(stats)
    p = ms[0].shape[0]
    z = rng.standard_normal((T + 1, p))
    theta = np.empty((T + 1, p))
    theta[T] = ms[T] + psd_factor(Cs[T], f"C_{T}") @ z[T]
    for t in range(T - 1, -1, -1):
        theta[t] = ms[t] + delta * (theta[t + 1] - ms[t])
        if delta < 1.0:
            L = psd_factor(Cs[t] * (1.0 - delta), f"C_{t}")
            theta[t] += L @ z[t]
    return theta


def sample_theta_path(y, X, V, m0, C0, delta, rng):
    """Fused FFBS draw over the whole sample using the selected kernel.

    Parameters
    ----------
    y : (T, q) observations; X : (T, J, q) latent agent states;
    V : (T, q, q) observation covariances.

    Returns
    -------
    theta : (T+1, p) draw for t=0..T
    m, C : filtered moments for t=0..T
    """
    y = np.ascontiguousarray(y, dtype=float)
    X = np.ascontiguousarray(X, dtype=float)
    V = np.ascontiguousarray(V, dtype=float)
    T, q = y.shape
    p = (X.shape[1] + 1) * q
    z = rng.standard_normal((T + 1, p))
    return kernels.theta_ffbs(
        y, X, V, np.ascontiguousarray(m0, dtype=float),
        np.ascontiguousarray(C0, dtype=float), float(delta), z)
