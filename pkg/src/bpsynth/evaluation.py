"""Forecast scoring: MSFE, LPDR, KL divergence of agent states, and BMA."""
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from ._linalg import chol_jitter, logdet_from_chol, spd_inverse
from .densities import Normal

__all__ = [
    "msfe",
    "cumulative_msfe",
    "lpdr",
    "predictive_logpdf",
    "kl_gaussian",
    "kl_mc",
    "BmaResult",
    "bma_weights",
    "bma_baseline",
]


def _errors(errors):
    e = np.asarray(errors, dtype=float)
    if e.ndim == 1:
        e = e[:, None]
    if e.shape[0] == 0:
        raise ValueError("no forecast errors to score")
    return e


def msfe(errors):
    """Mean squared error per series over origins; ``errors`` is (n, q)."""
    e = _errors(errors)
    return np.mean(e**2, axis=0)


def cumulative_msfe(errors):
    """Running MSFE_{1:t} per series, shape (n, q)."""
    e = _errors(errors)
    return np.cumsum(e**2, axis=0) / np.arange(1, e.shape[0] + 1)[:, None]


def lpdr(model_logpdfs, baseline_logpdfs):
    """Running sum of ``log p_model - log p_baseline`` over origins."""
    a = np.asarray(model_logpdfs, dtype=float)
    b = np.asarray(baseline_logpdfs, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"misaligned origins: {a.shape} vs {b.shape}")
    return np.cumsum(a - b)


def predictive_logpdf(forecast, y):
    """Log of the mean over saved draws of ``N(y | F theta, V)``.

    ``forecast`` needs ``loc`` (S, q) and ``V`` (S, q, q).
    """
    loc = np.asarray(forecast.loc, dtype=float)
    V = np.asarray(forecast.V, dtype=float)
    if loc.shape[0] == 0:
        raise ValueError("forecast has no samples")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    q = y.shape[0]
    L = np.linalg.cholesky(V)
    d = (y - loc)[..., None]
    sol = np.linalg.solve(L, d)[..., 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    comp = -0.5 * (q * np.log(2.0 * np.pi) + logdet + np.sum(sol**2, axis=1))
    return float(logsumexp(comp) - np.log(loc.shape[0]))


def kl_gaussian(p, h):
    """``KL(p || h)`` for two :class:`Normal` densities."""
    Lp = chol_jitter(p.cov, "KL covariance p")
    Lh = chol_jitter(h.cov, "KL covariance h")
    Hinv = spd_inverse(h.cov)
    d = h.mean - p.mean
    k = p.dim
    val = 0.5 * (np.trace(Hinv @ p.cov) + d @ Hinv @ d - k
                 + logdet_from_chol(Lh) - logdet_from_chol(Lp))
    return max(float(val), 0.0)


def kl_mc(samples, prior_logpdf, posterior_logpdf=None):
    """Monte Carlo ``KL(p || h) ~ mean(log p(x_i) - log h(x_i))``, ``x_i ~ p``.

    Without ``posterior_logpdf`` the posterior is approximated by a normal
    fitted to ``samples`` by moments (needs at least two samples).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if posterior_logpdf is None:
        if x.shape[0] < 2:
            raise ValueError("a Gaussian fit needs at least two samples")
        fit = Normal(x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False)))
        posterior_logpdf = fit.logpdf
    lp = np.asarray(posterior_logpdf(x), dtype=float)
    lh = np.asarray(prior_logpdf(x), dtype=float)
    r = lp - lh
    if not np.all(np.isfinite(r)):
        raise ValueError("log densities not finite at the samples")
    return float(np.mean(r))


@dataclass
class BmaResult:
    weights: np.ndarray    # (n, J); row i uses data before origin i
    log_evidence: np.ndarray  # (n + 1, J) cumulative log-likelihoods

    @property
    def final_weights(self):
        return softmax(self.log_evidence[-1])

    def combined_logpdf(self, agent_logpdfs):
        """Log density of the weight mixture at each origin."""
        lp = np.asarray(agent_logpdfs, dtype=float)
        with np.errstate(divide="ignore"):
            return logsumexp(lp + np.log(self.weights), axis=1)


def bma_weights(agent_logpdfs):
    """Posterior model probabilities before each origin.

    ``agent_logpdfs`` is (n, J): the 1-step joint log predictive density of
    each agent at each origin. Weights start equal and are the softmax of
    the cumulative log-likelihood of origins already scored.
    """
    lp = np.asarray(agent_logpdfs, dtype=float)
    if lp.ndim != 2 or lp.shape[1] == 0:
        raise ValueError("agent log densities must be (origins, agents)")
    if np.any(np.isnan(lp)) or np.any(lp == np.inf):
        raise ValueError("agent log densities must be finite or -inf")
    cum = np.vstack([np.zeros((1, lp.shape[1])), np.cumsum(lp, axis=0)])
    if np.any(np.all(cum == -np.inf, axis=1)):
        raise ValueError("every agent has zero likelihood; BMA weights undefined")
    w = softmax(cum, axis=1)
    return BmaResult(weights=w[:-1], log_evidence=cum)


def bma_baseline(agent_logpdfs, agent_forecasts=None):
    """BMA weights plus, if densities are given, the mixture moments.

    ``agent_forecasts[i][j]`` is agent j's density at origin i. Returns the
    :class:`BmaResult` and a list of ``(mean, cov)`` per origin (or None).
    """
    res = bma_weights(agent_logpdfs)
    if agent_forecasts is None:
        return res, None
    out = []
    for w, dens in zip(res.weights, agent_forecasts):
        mom = [d.moments() for d in dens]
        mean = sum(wj * m for wj, (m, _) in zip(w, mom))
        cov = sum(wj * (S + np.outer(m - mean, m - mean)) for wj, (m, S) in zip(w, mom))
        out.append((mean, cov))
    return res, out
