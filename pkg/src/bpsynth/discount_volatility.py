"""Discount inverse-Wishart stochastic volatility for the residual covariance.

Conventions: ``V ~ IW(n, D)`` means the precision ``V^{-1}`` is Wishart with
``h = n + q - 1`` degrees of freedom and scale ``D^{-1}`` (mean ``h D^{-1}``).
The filter carries ``h`` and reports ``n = h - q + 1``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import kernels
from ._linalg import symmetrize
from .errors import ConfigError, NumericalError

__all__ = [
    "VolFilterStats",
    "initial_vol_stats",
    "volatility_filter_step",
    "backward_sample_volatility",
    "sample_wishart",
    "sample_discount_wishart",
    "sample_volatility_path",
]


@dataclass
class VolFilterStats:
    h: float
    D: np.ndarray

    @property
    def q(self):
        return self.D.shape[0]

    @property
    def n(self):
        return self.h - self.q + 1


def initial_vol_stats(n0, D0):
    D0 = np.atleast_2d(np.asarray(D0, dtype=float))
    stats = VolFilterStats(h=float(n0) + D0.shape[0] - 1, D=symmetrize(D0))
    if stats.n <= 0:
        raise ValueError(f"prior degrees of freedom must be positive, got n0={n0}")
    return stats


def volatility_filter_step(prev, residual, beta):
    """``h' = beta h + 1``, ``D' = beta D + e e'``."""
    e = np.atleast_1d(np.asarray(residual, dtype=float))
    if e.shape != (prev.q,):
        raise ValueError(f"residual has shape {e.shape}, expected ({prev.q},)")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    out = VolFilterStats(h=beta * prev.h + 1.0, D=symmetrize(beta * prev.D + np.outer(e, e)))
    if out.n <= 0:
        raise ConfigError(f"degrees of freedom n={out.n:g} not positive; beta={beta} is too small "
                          f"for q={prev.q}")
    return out


def sample_wishart(dof, scale, rng, size=None):
    """Wishart draw(s) by the Bartlett decomposition, real ``dof > q - 1``.

    Returns one (q, q) matrix, or an array of shape (size, q, q).
    """
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    q = scale.shape[0]
    if not dof > q - 1:
        raise ValueError(f"Wishart dof must exceed q-1={q - 1}, got {dof}")
    try:
        L = np.linalg.cholesky(symmetrize(scale))
    except np.linalg.LinAlgError:
        raise NumericalError("Wishart scale matrix is not positive definite") from None
    n = 1 if size is None else int(size)
    A = np.tril(rng.standard_normal((n, q, q)), -1)
    chi2 = rng.chisquare(dof - np.arange(q), size=(n, q))
    idx = np.arange(q)
    A[:, idx, idx] = np.sqrt(chi2)
    LA = L @ A
    W = symmetrize(LA @ np.swapaxes(LA, 1, 2))
    return W[0] if size is None else W


def _bartlett_factors(dofs, q, rng):
    """Factors ``A_t`` with ``A_t A_t'`` a Wishart(dof_t, I) draw (see below)."""
    dofs = np.asarray(dofs, dtype=float)
    T = dofs.shape[0]
    u = rng.random(T)
    Z = rng.standard_normal((T, q, q))
    bart = dofs > q - 1
    A = np.empty((T, q, q))
    if np.any(bart):
        chi2 = rng.chisquare(dofs[bart][:, None] - np.arange(q))
        Ab = np.tril(Z[bart], -1)
        idx = np.arange(q)
        Ab[:, idx, idx] = np.sqrt(chi2)
        A[bart] = Ab
    sing = ~bart
    if np.any(sing):
        d = dofs[sing]
        k = np.floor(d) + (u[sing] < (d - np.floor(d)))
        keep = np.arange(q)[None, :] < k[:, None]
        # columns of A are the k retained normal vectors
        A[sing] = np.swapaxes(Z[sing] * keep[:, :, None], 1, 2)
    return A


def sample_discount_wishart(dofs, scale_chols, rng):
    """One Wishart-type draw per time point for the discount recursions.

    ``dofs`` (T,) may be any nonnegative reals. For ``dof > q - 1`` the draw
    is an exact Bartlett Wishart. Fractional values at or below ``q - 1`` have
    no Wishart distribution, so there the draw is a singular Wishart with
    ``k`` degrees of freedom, ``k = floor(dof) + Bernoulli(frac(dof))``; it is
    positive semidefinite with mean ``dof * scale`` and is exact for integer
    ``dof``. ``dof = 0`` gives the zero matrix.

    Draw layout: ``T`` uniforms, then (T, q, q) normals, then chi-squares for
    the Bartlett entries, so the stream use does not depend on the data.
    """
    A = _bartlett_factors(dofs, scale_chols.shape[1], rng)
    LA = scale_chols @ A
    return symmetrize(LA @ np.swapaxes(LA, 1, 2))


def _backward(h, D, beta, rng):
    T = D.shape[0] - 1
    dofs = np.empty(T + 1)
    dofs[T] = h[T]
    dofs[:T] = (1.0 - beta) * h[:T]
    return kernels.vol_backward(np.ascontiguousarray(D), float(beta),
                                _bartlett_factors(dofs, D.shape[1], rng))


def backward_sample_volatility(stats, beta, rng):
    """Draw ``V_0..V_T`` given the forward summaries for t=0..T.

    ``stats`` is the full sequence of :class:`VolFilterStats` starting with
    the prior at t=0. Returns ``(V, V_inv)`` stacks of shape (T+1, q, q).
    """
    h = np.array([s.h for s in stats])
    D = np.stack([s.D for s in stats])
    return _backward(h, D, beta, rng)


def sample_volatility_path(resid, n0, D0, beta, rng):
    """Forward filter on residuals (T, q) then backward sample.

    Returns ``V, V_inv, h, D`` where each stack covers t=0..T.
    """
    resid = np.asarray(resid, dtype=float)
    T, q = resid.shape
    init = initial_vol_stats(n0, D0)
    h = np.empty(T + 1)
    D = np.empty((T + 1, q, q))
    h[0], D[0] = init.h, init.D
    outer = resid[:, :, None] * resid[:, None, :]
    zi = np.concatenate([[beta * init.h], (beta * init.D).ravel()])[None, :]
    x = np.concatenate([np.ones((T, 1)), outer.reshape(T, -1)], axis=1)
    filt = lfilter([1.0], [1.0, -beta], x, axis=0, zi=zi)[0]
    h[1:] = filt[:, 0]
    if np.min(h) <= q - 1:
        raise ConfigError(f"degrees of freedom fall to {np.min(h) - q + 1:g} <= 0; beta={beta} is too "
                          f"small for q={q}")
    D[1:] = filt[:, 1:].reshape(T, q, q)
    V, Vinv = _backward(h, D, beta, rng)
    return V, Vinv, h, D
