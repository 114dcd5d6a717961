"""Sampling the latent agent states given the synthesis parameters.

At each t the full conditional is proportional to
``N(y_t | F_t theta_t, V_t) * prod_j h_tj(x_tj)``. Normal and Student-T
agents (the latter through their normal scale-mixture form) are drawn
jointly from a (Jq)-dimensional Gaussian; agents known only through samples
are updated by importance resampling.
"""
import logging

import numpy as np

from . import kernels
from ._linalg import chol_jitter, spd_inverse, symmetrize
from .densities import Empirical, Normal, StudentT

__all__ = [
    "AgentPriors",
    "sample_states_normal",
    "sample_states_t",
    "sample_phi",
    "sample_states_empirical",
    "importance_weights",
    "update_states",
]

log = logging.getLogger(__name__)


class AgentPriors:
    """Agent densities over a sample, pre-factorized for repeated sweeps.

    ``densities[t][j]`` is agent j's forecast density for time t. An agent
    must use the same density family at every t.
    """

    def __init__(self, densities):
        self.densities = [list(row) for row in densities]
        self.T = len(self.densities)
        if self.T == 0:
            raise ValueError("no time points")
        self.J = len(self.densities[0])
        self.q = self.densities[0][0].dim
        kinds = []
        for j in range(self.J):
            ks = {row[j].kind for row in self.densities}
            if len(ks) != 1:
                raise ValueError(f"agent {j} mixes density families {sorted(ks)}")
            kinds.append(ks.pop())
        self.kinds = kinds
        self.gauss = [j for j, k in enumerate(kinds) if k in ("normal", "student_t")]
        self.emp = [j for j, k in enumerate(kinds) if k == "empirical"]

        T, q, G = self.T, self.q, len(self.gauss)
        self.loc = np.zeros((T, G, q))
        self.chol = np.zeros((T, G, q, q))
        self.prec = np.zeros((T, G, q, q))
        self.lin = np.zeros((T, G, q))
        self.dof = np.full((T, G), np.inf)
        for t, row in enumerate(self.densities):
            for g, j in enumerate(self.gauss):
                d = row[j]
                if d.dim != q:
                    raise ValueError("agent densities disagree on dimension")
                if d.kind == "normal":
                    loc, S = d.mean, d.cov
                else:
                    loc, S = d.loc, d.scale
                    self.dof[t, g] = d.dof
                self.loc[t, g] = loc
                self.chol[t, g] = chol_jitter(S, f"agent {j} scale at t={t + 1}")
                self.prec[t, g] = spd_inverse(S)
                self.lin[t, g] = self.prec[t, g] @ loc
        self.draws = {}
        for j in self.emp:
            sizes = {row[j].n_draws for row in self.densities}
            if len(sizes) != 1:
                raise ValueError(f"empirical agent {j} has varying draw counts {sorted(sizes)}")
            self.draws[j] = np.stack([row[j].draws for row in self.densities])
        self.is_t = np.isfinite(self.dof)

    def initial_states(self, rng, mode="prior", y=None):
        """Initial ``X`` (T, J, q) and scale factors ``phi`` (T, J).

        ``mode="prior"`` draws every x_tj from h_tj; ``mode="observed"``
        sets x_tj = y_t.
        """
        T, J, q = self.T, self.J, self.q
        phi = np.ones((T, J))
        if mode == "observed":
            if y is None:
                raise ValueError("observed initialization needs y")
            return np.repeat(np.asarray(y, dtype=float)[:, None, :], J, axis=1), phi
        if mode != "prior":
            raise ValueError(f"unknown initialization mode {mode!r}")
        X = np.empty((T, J, q))
        for j in range(J):
            if j in self.draws:
                idx = rng.integers(self.draws[j].shape[1], size=T)
                X[:, j] = self.draws[j][np.arange(T), idx]
                continue
            g = self.gauss.index(j)
            z = rng.standard_normal((T, q))
            x = np.einsum("trs,ts->tr", self.chol[:, g], z)
            if self.kinds[j] == "student_t":
                ph = rng.gamma(0.5 * self.dof[:, g], 2.0 / self.dof[:, g])
                x /= np.sqrt(ph)[:, None]
                phi[:, j] = ph
            X[:, j] = self.loc[:, g] + x
        return X, phi


def _split_theta(theta, J, q):
    th = np.asarray(theta, dtype=float).reshape(-1, q, J + 1)
    return th[:, :, 0], th[:, :, 1:]


def importance_weights(loglik):
    """Normalized weights from log-likelihoods along the last axis.

    Rows whose log-likelihoods are all non-finite fall back to uniform
    weights with a logged warning.
    """
    loglik = np.asarray(loglik, dtype=float)
    top = np.max(loglik, axis=-1, keepdims=True)
    bad = ~np.isfinite(top[..., 0])
    safe_top = np.where(np.isfinite(top), top, 0.0)
    w = np.exp(loglik - safe_top)
    w = np.where(np.isfinite(w), w, 0.0)
    tot = w.sum(axis=-1, keepdims=True)
    bad |= ~(tot[..., 0] > 0)
    if np.any(bad):
        log.warning("importance weights underflowed at %d time point(s); resampling uniformly",
                    int(np.sum(bad)))
        w[bad] = 1.0
        tot = w.sum(axis=-1, keepdims=True)
    return w / tot


def _resample(weights, u):
    cum = np.cumsum(weights, axis=-1)
    idx = np.sum(cum < u[:, None] * cum[:, -1:], axis=-1)
    return np.minimum(idx, weights.shape[-1] - 1)


def _empirical_update(priors, X, y, intercept, w, Vinv, rng, joint):
    T = priors.T
    emp = priors.emp
    if not emp:
        return X
    rows = np.arange(T)
    if joint:
        sizes = {priors.draws[j].shape[1] for j in emp}
        if len(sizes) != 1:
            raise ValueError("joint candidate resampling needs equal draw counts")
        others = [k for k in range(priors.J) if k not in emp]
        base = y - intercept - np.einsum("trk,tkr->tr", w[:, :, others], X[:, others])
        contrib = sum(w[:, None, :, j] * priors.draws[j] for j in emp)  # (T, I, q)
        res = base[:, None, :] - contrib
        ll = -0.5 * np.einsum("tir,trs,tis->ti", res, Vinv, res)
        idx = _resample(importance_weights(ll), rng.random(T))
        for j in emp:
            X[:, j] = priors.draws[j][rows, idx]
        return X
    for j in emp:
        others = [k for k in range(priors.J) if k != j]
        base = y - intercept - np.einsum("trk,tkr->tr", w[:, :, others], X[:, others])
        res = base[:, None, :] - w[:, None, :, j] * priors.draws[j]
        ll = -0.5 * np.einsum("tir,trs,tis->ti", res, Vinv, res)
        idx = _resample(importance_weights(ll), rng.random(T))
        X[:, j] = priors.draws[j][rows, idx]
    return X


def _gaussian_update(priors, X, y, intercept, w, Vinv, phi, rng):
    G = priors.gauss
    if not G:
        return X
    T, q = priors.T, priors.q
    emp = priors.emp
    icpt = intercept.copy()
    if emp:
        icpt += np.einsum("trk,tkr->tr", w[:, :, emp], X[:, emp])
    theta_g = np.concatenate([icpt[:, :, None], w[:, :, G]], axis=2).reshape(T, -1)
    z = rng.standard_normal((T, len(G) * q))
    Xg = kernels.gaussian_states(
        np.ascontiguousarray(y), np.ascontiguousarray(theta_g), np.ascontiguousarray(Vinv),
        priors.prec, priors.lin, np.ascontiguousarray(phi[:, G]), z)
    X[:, G] = Xg
    return X


def _phi_update(priors, X, phi, rng):
    if not np.any(priors.is_t):
        return phi
    phi = phi.copy()
    for g, j in enumerate(priors.gauss):
        if priors.kinds[j] != "student_t":
            continue
        d = X[:, j] - priors.loc[:, g]
        d2 = np.einsum("tr,trs,ts->t", d, priors.prec[:, g], d)
        n = priors.dof[:, g]
        phi[:, j] = rng.gamma(0.5 * (n + priors.q), 2.0 / (n + d2))
    return phi


def update_states(priors, X, phi, y, theta, Vinv, rng, joint_empirical=False):
    """One pass of the latent-state block over all t.

    ``theta`` holds theta_1..theta_T (T, p); ``Vinv`` the precisions
    (T, q, q). Returns new ``(X, phi)``.
    """
    y = np.asarray(y, dtype=float)
    intercept, w = _split_theta(theta, priors.J, priors.q)
    X = np.array(X, dtype=float, copy=True)
    X = _empirical_update(priors, X, y, intercept, w, Vinv, rng, joint_empirical)
    X = _gaussian_update(priors, X, y, intercept, w, Vinv, phi, rng)
    phi = _phi_update(priors, X, phi, rng)
    return X, phi


# Single-time-point entry points -------------------------------------------

def _one(theta, V, y):
    V = np.atleast_2d(np.asarray(V, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return (np.asarray(theta, dtype=float)[None, :], spd_inverse(V, "V")[None], y[None, :])


def sample_states_normal(theta, V, y, priors, rng):
    """Exact draw of X (J x q) from its Gaussian full conditional; all agents Normal."""
    if not all(isinstance(p, Normal) for p in priors):
        raise TypeError("sample_states_normal needs Normal agent densities")
    th, Vinv, yy = _one(theta, V, y)
    ap = AgentPriors([priors])
    X = np.zeros((1, ap.J, ap.q))
    intercept, w = _split_theta(th, ap.J, ap.q)
    return _gaussian_update(ap, X, yy, intercept, w, Vinv, np.ones((1, ap.J)), rng)[0]


def sample_states_t(theta, V, y, priors, phi, rng):
    """As :func:`sample_states_normal` with agent j's covariance ``H_j / phi_j``."""
    if not all(isinstance(p, StudentT) for p in priors):
        raise TypeError("sample_states_t needs StudentT agent densities")
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0):
        raise ValueError("scale factors must be positive")
    th, Vinv, yy = _one(theta, V, y)
    ap = AgentPriors([priors])
    X = np.zeros((1, ap.J, ap.q))
    intercept, w = _split_theta(th, ap.J, ap.q)
    return _gaussian_update(ap, X, yy, intercept, w, Vinv, phi[None, :], rng)[0]


def sample_phi(x, priors, rng):
    """Scale factors from ``Gamma((n + q)/2, rate (n + d^2)/2)``,
    ``d^2 = (x - h)' H^{-1} (x - h)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("latent states must be finite")
    ap = AgentPriors([priors])
    return _phi_update(ap, x[None], np.ones((1, ap.J)), rng)[0]


def sample_states_empirical(theta, V, y, priors, rng, current=None, joint=False):
    """Importance-resample latent states from stored agent draws.

    With ``joint=True`` one index selects every agent's state (collated
    draws). Otherwise agents are updated one at a time holding the rest at
    ``current`` (default: each agent's draw mean).
    """
    if not all(isinstance(p, Empirical) for p in priors):
        raise TypeError("sample_states_empirical needs Empirical agent densities")
    th, Vinv, yy = _one(theta, V, y)
    ap = AgentPriors([priors])
    if current is None:
        current = np.stack([p.draws.mean(axis=0) for p in priors])
    X = np.array(current, dtype=float)[None]
    intercept, w = _split_theta(th, ap.J, ap.q)
    return _empirical_update(ap, X, yy, intercept, w, Vinv, rng, joint)[0]
