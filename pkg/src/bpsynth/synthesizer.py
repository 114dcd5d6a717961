"""Three-block Gibbs sampler for the dynamic synthesis model and its forecasts.

Model, for q series and J agents::

    y_t = F_t theta_t + nu_t,        nu_t ~ N(0, V_t)
    theta_t = theta_{t-1} + omega_t  (discount delta)
    V_t discount inverse-Wishart     (discount beta)
    X_t ~ prod_j h_tj(x_tj)

Each sweep draws theta_{0:T} | X, V by FFBS, then V_{0:T} | theta, X by the
discount-volatility FFBS, then X_{1:T} (and Student-T scale factors) | theta, V.
"""
from dataclasses import dataclass, field

import numpy as np

from .agent_states import AgentPriors, update_states
from .discount_volatility import initial_vol_stats, sample_discount_wishart, sample_volatility_path
from .dlm_ffbs import sample_theta_path
from ._linalg import chol_jitter, symmetrize

__all__ = [
    "BpsPrior",
    "McmcConfig",
    "SweepState",
    "PosteriorDraws",
    "ForecastDistribution",
    "initialize_states",
    "gibbs_sweep",
    "run_mcmc",
    "forecast_one_step",
    "predictive_mean",
]


@dataclass
class BpsPrior:
    m0: np.ndarray
    C0: np.ndarray
    n0: float
    D0: np.ndarray
    delta: float = 0.99
    beta: float = 0.99

    def __post_init__(self):
        self.m0 = np.asarray(self.m0, dtype=float)
        self.C0 = symmetrize(np.atleast_2d(np.asarray(self.C0, dtype=float)))
        self.D0 = symmetrize(np.atleast_2d(np.asarray(self.D0, dtype=float)))
        p, q = self.m0.shape[0], self.D0.shape[0]
        if self.C0.shape != (p, p):
            raise ValueError("C0 does not match m0")
        if p % q:
            raise ValueError(f"coefficient length {p} is not a multiple of q={q}")
        for name in ("delta", "beta"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        initial_vol_stats(self.n0, self.D0)
        for M, what in ((self.C0, "C0"), (self.D0, "D0")):
            if np.any(M) or what == "D0":
                chol_jitter(M, what)

    @property
    def q(self):
        return self.D0.shape[0]

    @property
    def n_agents(self):
        return self.m0.shape[0] // self.q - 1

    @classmethod
    def default(cls, n_agents, n_series, intercept_var=0.001, coef_var=1.0,
                series_coef_var=None, n0=7.0, d0_scale=0.01, delta=0.99, beta=0.99):
        """Independent per-series priors: intercept mean 0, agent weights 1/J.

        ``series_coef_var`` maps a series position to the prior variance of
        that series' agent weights, overriding ``coef_var``.
        """
        J, q = n_agents, n_series
        series_coef_var = series_coef_var or {}
        m0 = np.tile(np.r_[0.0, np.full(J, 1.0 / J)], q)
        diag = []
        for r in range(q):
            diag.append(intercept_var)
            diag.extend([series_coef_var.get(r, coef_var)] * J)
        return cls(m0=m0, C0=np.diag(diag), n0=n0, D0=n0 * d0_scale * np.eye(q),
                   delta=delta, beta=beta)

    def check(self, n_agents, n_series):
        if self.q != n_series or self.n_agents != n_agents:
            raise ValueError(
                f"prior sized for J={self.n_agents}, q={self.q}; data has J={n_agents}, q={n_series}")


@dataclass
class McmcConfig:
    burn_in: int = 3000
    n_saved: int = 5000
    seed: int = 0
    thin: int = 1

    def __post_init__(self):
        if self.burn_in < 0 or self.n_saved < 1 or self.thin < 1:
            raise ValueError("need burn_in >= 0, n_saved >= 1 and thin >= 1")


@dataclass
class SweepState:
    """Current values of every block, plus by-products used for forecasting."""

    theta: np.ndarray      # (T+1, p), t = 0..T
    V: np.ndarray          # (T+1, q, q)
    Vinv: np.ndarray       # (T+1, q, q)
    X: np.ndarray          # (T, J, q), t = 1..T
    phi: np.ndarray        # (T, J)
    C_T: np.ndarray | None = None
    h: np.ndarray | None = None   # (T+1,)
    D: np.ndarray | None = None   # (T+1, q, q)


@dataclass
class PosteriorDraws:
    """Saved Gibbs draws.

    ``theta``, ``V`` and ``X`` hold t=1..T paths when ``paths`` is True,
    otherwise only time T (a length-1 time axis). With ``paths="states"``
    only ``X`` keeps the full path.
    """

    theta: np.ndarray     # (S, T or 1, p)
    V: np.ndarray         # (S, T or 1, q, q)
    X: np.ndarray         # (S, T or 1, J, q)
    loglik: np.ndarray    # (S,)
    Vinv_T: np.ndarray    # (S, q, q)
    C_T: np.ndarray       # (S, p, p)
    D_T: np.ndarray       # (S, q, q)
    h_T: float
    paths: object = True

    @property
    def n_saved(self):
        return self.loglik.shape[0]

    @property
    def theta_T(self):
        return self.theta[:, -1]

    @property
    def X_T(self):
        return self.X[:, -1]


@dataclass
class ForecastDistribution:
    samples: np.ndarray   # (S, q) synthetic outcomes
    loc: np.ndarray       # (S, q) F_{t+1} theta_{t+1}
    V: np.ndarray         # (S, q, q)
    theta: np.ndarray     # (S, p)
    X: np.ndarray         # (S, J, q)
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return self.samples.shape[0]

    def mean(self):
        return self.samples.mean(axis=0)


def _as_priors(forecasts):
    return forecasts if isinstance(forecasts, AgentPriors) else AgentPriors(forecasts)


def initialize_states(forecasts, rng, mode="prior", y=None):
    """Initial latent states ``X`` (T, J, q) and scale factors ``phi`` (T, J)."""
    return _as_priors(forecasts).initial_states(rng, mode=mode, y=y)


def _fitted(theta, X):
    """F_t theta_t for stacked theta (T, p) and X (T, J, q)."""
    T, J, q = X.shape
    th = theta.reshape(T, q, J + 1)
    return th[:, :, 0] + np.einsum("trj,tjr->tr", th[:, :, 1:], X)


def _loglik(y, theta, X, V):
    resid = y - _fitted(theta, X)
    L = np.linalg.cholesky(V)
    sol = np.linalg.solve(L, resid[..., None])[..., 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    q = y.shape[1]
    return float(np.sum(-0.5 * (q * np.log(2 * np.pi) + logdet + np.sum(sol**2, axis=1))))


def _block_theta(state, y, prior, rng):
    theta, _, C = sample_theta_path(y, state.X, state.V[1:], prior.m0, prior.C0, prior.delta, rng)
    state.theta = theta
    state.C_T = C[-1]


def _block_vol(state, y, prior, rng):
    resid = y - _fitted(state.theta[1:], state.X)
    state.V, state.Vinv, state.h, state.D = sample_volatility_path(
        resid, prior.n0, prior.D0, prior.beta, rng)


def _block_states(state, y, priors, rng):
    state.X, state.phi = update_states(
        priors, state.X, state.phi, y, state.theta[1:], state.Vinv[1:], rng)


def initial_state(y, priors, prior, rng, mode="prior"):
    priors = _as_priors(priors)
    y = np.asarray(y, dtype=float)
    T, q = y.shape
    prior.check(priors.J, q)
    X, phi = priors.initial_states(rng, mode=mode, y=y)
    h0 = prior.n0 + q - 1
    V = np.repeat((prior.D0 / h0)[None], T + 1, axis=0)
    Vinv = np.repeat(np.linalg.inv(prior.D0 / h0)[None], T + 1, axis=0)
    theta = np.repeat(prior.m0[None], T + 1, axis=0)
    return SweepState(theta=theta, V=V, Vinv=Vinv, X=X, phi=phi)


def gibbs_sweep(state, y, forecasts, prior, rng, order=(1, 2, 3)):
    """Update ``state`` in place by one pass over the three blocks.

    ``order`` lists the blocks: 1 = coefficients, 2 = volatilities,
    3 = latent agent states.
    """
    priors = _as_priors(forecasts)
    y = np.asarray(y, dtype=float)
    for b in order:
        if b == 1:
            _block_theta(state, y, prior, rng)
        elif b == 2:
            _block_vol(state, y, prior, rng)
        elif b == 3:
            _block_states(state, y, priors, rng)
        else:
            raise ValueError(f"unknown block {b}")
    return state


def run_mcmc(y, forecasts, prior, cfg, rng=None, init_mode="prior", keep_paths=True,
             order=(1, 2, 3)):
    """Run the Gibbs sampler and return :class:`PosteriorDraws`.

    ``burn_in`` sweeps are discarded, then ``n_saved * thin`` sweeps run with
    every ``thin``-th one saved. ``rng`` defaults to a generator seeded with
    ``cfg.seed``. ``keep_paths`` saves full trajectories (True), only the
    final time point (False), or full latent-state paths with final-time
    coefficients and volatilities (``"states"``).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[0] < 1:
        raise ValueError("need at least one observation")
    priors = _as_priors(forecasts)
    if priors.T != y.shape[0]:
        raise ValueError(f"{y.shape[0]} observations but {priors.T} forecast time points")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if sorted(order) != [1, 2, 3]:
        raise ValueError(f"order must be a permutation of (1, 2, 3), got {order}")
    state = initial_state(y, priors, prior, rng, mode=init_mode)

    T, q = y.shape
    J, p = priors.J, prior.m0.shape[0]
    S = cfg.n_saved
    if keep_paths not in (True, False, "states"):
        raise ValueError(f"keep_paths must be True, False or 'states', got {keep_paths!r}")
    full = keep_paths is True
    nt = T if full else 1
    nx = T if keep_paths else 1
    out = PosteriorDraws(
        theta=np.empty((S, nt, p)), V=np.empty((S, nt, q, q)), X=np.empty((S, nx, J, q)),
        loglik=np.empty(S), Vinv_T=np.empty((S, q, q)), C_T=np.empty((S, p, p)),
        D_T=np.empty((S, q, q)), h_T=0.0, paths=keep_paths)
    sl = slice(1, None) if full else slice(T, None)
    xs = slice(None) if keep_paths else slice(T - 1, None)
    for _ in range(cfg.burn_in):
        gibbs_sweep(state, y, priors, prior, rng, order=order)
    for s in range(S):
        for _ in range(cfg.thin):
            gibbs_sweep(state, y, priors, prior, rng, order=order)
        out.theta[s] = state.theta[sl]
        out.V[s] = state.V[sl]
        out.X[s] = state.X[xs]
        out.Vinv_T[s] = state.Vinv[T]
        out.C_T[s] = state.C_T
        out.D_T[s] = state.D[T]
        out.loglik[s] = _loglik(y, state.theta[1:], state.X, state.V[1:])
    out.h_T = float(state.h[T])
    return out


def forecast_one_step(draws, next_forecasts, prior, rng):
    """Synthetic-future draws of the next outcome, one per saved draw.

    Per draw: ``V^{-1}_{T+1} = beta V^{-1}_T + W((1-beta) h_T, D_T^{-1})``,
    ``theta_{T+1} = theta_T + N(0, C_T (1-delta)/delta)``, agent states from
    ``next_forecasts`` independently, then ``y ~ N(F theta, V)``.
    """
    S = draws.n_saved
    J = len(next_forecasts)
    q = next_forecasts[0].dim
    prior.check(J, q)
    delta, beta = prior.delta, prior.beta

    dofs = np.full(S, (1.0 - beta) * draws.h_T)
    Dinv = symmetrize(np.linalg.inv(draws.D_T))
    incr = sample_discount_wishart(dofs, np.linalg.cholesky(Dinv), rng)
    Vinv = symmetrize(beta * draws.Vinv_T + incr)
    V = symmetrize(np.linalg.inv(Vinv))

    theta_T = draws.theta_T
    p = theta_T.shape[1]
    z = rng.standard_normal((S, p))
    if delta < 1.0:
        scale = (1.0 - delta) / delta
        L = np.stack([_zero_safe_chol(scale * C) for C in draws.C_T])
        theta = theta_T + np.einsum("sij,sj->si", L, z)
    else:
        theta = theta_T.copy()

    X = np.empty((S, J, q))
    for j, dens in enumerate(next_forecasts):
        X[:, j] = dens.sample(rng, size=S)
    loc = _fitted(theta, X)
    eps = np.einsum("sij,sj->si", np.linalg.cholesky(V), rng.standard_normal((S, q)))
    return ForecastDistribution(samples=loc + eps, loc=loc, V=V, theta=theta, X=X)


def _zero_safe_chol(M):
    if not np.any(M):
        return np.zeros_like(M)
    return chol_jitter(M, "coefficient evolution covariance")


def predictive_mean(fc):
    return fc.samples.mean(axis=0)
