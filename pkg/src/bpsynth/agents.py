"""TVP-VAR forecasting agents and the forecast archive.

Each agent is an exchangeable time-series DLM::

    y_t' = x_t' Theta_t + nu_t',   nu_t ~ N(0, Sigma_t)
    Theta_t = Theta_{t-1} + Omega_t   (matrix-normal, discount delta)
    Sigma_t  matrix-beta/Wishart random walk (discount beta)

with regressors ``x_t = (1, y_{t-l} for l in lags)``. One-step forecasts are
multivariate T in closed form; longer horizons are simulated.
"""
import csv
import os
import re
from dataclasses import dataclass, field

import numpy as np

from ._linalg import chol_jitter, symmetrize
from .densities import Empirical, Normal, StudentT, fit_student_t
from .discount_volatility import sample_discount_wishart
from .errors import DataError
from . import months

__all__ = [
    "LagSpec",
    "parse_lag_spec",
    "TvpVarPrior",
    "TvpVarState",
    "fit_tvpvar_filter",
    "agent_forecast",
    "build_forecast_target",
    "ROLES",
    "default_role",
    "ForecastArchive",
]

ROLES = ("change", "cumulative", "level")
_DEFAULT_ROLES = {"p": "change", "w": "change", "u": "change", "c": "change",
                  "i": "cumulative", "r": "level"}


def default_role(name):
    return _DEFAULT_ROLES.get(name, "level")


@dataclass(frozen=True)
class LagSpec:
    lags: tuple
    label: str = ""

    def __post_init__(self):
        lags = tuple(int(v) for v in self.lags)
        if not lags or any(v < 1 for v in lags) or any(b <= a for a, b in zip(lags, lags[1:])):
            raise ValueError(f"lags must be nonempty, positive and increasing: {lags}")
        object.__setattr__(self, "lags", lags)

    @property
    def max_lag(self):
        return self.lags[-1]


def parse_lag_spec(text):
    """``"p"`` gives lags 1..p; ``"a:s:b"`` gives {a} plus s, 2s, ..., b."""
    text = str(text).strip()
    if re.fullmatch(r"\d+", text):
        p = int(text)
        if p < 1:
            raise ValueError(f"lag order must be positive: {text!r}")
        return LagSpec(tuple(range(1, p + 1)), text)
    m = re.fullmatch(r"(\d+):(\d+):(\d+)", text)
    if not m:
        raise ValueError(f"malformed lag spec {text!r}; expected 'p' or 'a:s:b'")
    a, s, b = (int(g) for g in m.groups())
    if s < 1 or b % s:
        raise ValueError(f"lag spec {text!r}: {b} is not a multiple of the interval {s}")
    lags = sorted({a} | set(range(s, b + 1, s)))
    return LagSpec(tuple(lags), text)


@dataclass
class TvpVarPrior:
    coef_var: float = 1.0
    n0: float = 7.0
    d0_scale: float = 0.01


@dataclass
class TvpVarState:
    """Filtered moments after observing ``y_t`` (panel row ``t``)."""

    t: int
    M: np.ndarray      # (k, q) coefficient mean
    C: np.ndarray      # (k, k) row covariance
    h: float
    D: np.ndarray      # (q, q)
    lags: LagSpec
    delta: float
    beta: float

    @property
    def q(self):
        return self.D.shape[0]

    @property
    def n(self):
        return self.h - self.q + 1



def _regressor(history, t, lags):
    """x for predicting row ``t`` from rows before it."""
    return np.concatenate([[1.0]] + [history[t - l] for l in lags.lags])


def fit_tvpvar_filter(values, spec, delta=0.99, beta=0.99, prior=None):
    """Run the agent's forward filter over a (T, q) panel.

    Returns one :class:`TvpVarState` per row ``t = max_lag .. T-1``.
    """
    Y = np.asarray(values, dtype=float)
    if isinstance(spec, str):
        spec = parse_lag_spec(spec)
    prior = prior or TvpVarPrior()
    T, q = Y.shape
    if T <= spec.max_lag:
        raise DataError(f"{T} observations do not exceed the maximum lag {spec.max_lag}")
    k = 1 + q * len(spec.lags)
    M = np.zeros((k, q))
    C = prior.coef_var * np.eye(k)
    h = prior.n0 + q - 1
    D = prior.n0 * prior.d0_scale * np.eye(q)
    states = []
    for t in range(spec.max_lag, T):
        x = _regressor(Y, t, spec)
        R = C / delta
        Rx = R @ x
        qv = float(x @ Rx) + 1.0
        e = Y[t] - M.T @ x
        A = Rx / qv
        M = M + np.outer(A, e)
        C = symmetrize(R - np.outer(A, A) * qv)
        h = beta * h + 1.0
        D = symmetrize(beta * D + np.outer(e, e) / qv)
        states.append(TvpVarState(t, M, C, h, D, spec, delta, beta))
    return states


def one_step_density(state, history):
    """Closed-form multivariate T for row ``state.t + 1``."""
    x = _regressor(history, state.t + 1, state.lags)
    f = state.M.T @ x
    qv = float(x @ (state.C / state.delta) @ x) + 1.0
    n = state.n
    if n <= 0:
        raise DataError(f"agent volatility dof {n:g} not positive; increase prior dof")
    return StudentT(n, f, qv * state.D / n)


def simulate_paths(state, history, k, n_draws, rng):
    """Simulated outcome paths for rows ``t+1 .. t+k`` (n_draws, k, q).

    Per path the covariance is drawn once from its current posterior and
    held fixed; the coefficients start from their evolved posterior and take
    a discount random-walk step at every later horizon.
    """
    q, lags = state.q, state.lags
    kx = state.M.shape[0]
    delta = state.delta
    Lw = np.linalg.cholesky(symmetrize(np.linalg.inv(state.D)))
    prec = sample_discount_wishart(np.full(n_draws, state.h), np.repeat(Lw[None], n_draws, 0), rng)
    Sigma = symmetrize(np.linalg.inv(prec))
    LS = np.linalg.cholesky(Sigma)
    LR = chol_jitter(state.C / delta, "agent coefficient covariance")
    LSt = LS.transpose(0, 2, 1)
    Theta = state.M + LR @ rng.standard_normal((n_draws, kx, q)) @ LSt
    if delta < 1.0:
        LW = chol_jitter(state.C * (1.0 - delta) / delta, "agent evolution covariance")
    maxlag = lags.max_lag
    buf = np.empty((n_draws, maxlag + k, q))
    buf[:, :maxlag] = history[state.t + 1 - maxlag:state.t + 1]
    for s in range(k):
        if s > 0 and delta < 1.0:
            Theta = Theta + LW @ rng.standard_normal((n_draws, kx, q)) @ LSt
        pos = maxlag + s
        x = np.concatenate([np.ones((n_draws, 1))] + [buf[:, pos - l] for l in lags.lags], axis=1)
        mean = (x[:, None, :] @ Theta)[:, 0]
        buf[:, pos] = mean + (LS @ rng.standard_normal((n_draws, q, 1)))[..., 0]
    return buf[:, maxlag:]


def build_forecast_target(path, k, roles):
    """Horizon-``k`` target from a path whose first row is the origin value.

    ``path`` has shape (..., k+1, q). Roles per series: ``"change"`` is the
    change from the origin value, ``"cumulative"`` the sum of the k
    post-origin values, ``"level"`` the value at the horizon. At ``k = 1``
    every role is the value at the horizon.
    """
    path = np.asarray(path, dtype=float)
    if path.shape[-2] != k + 1:
        raise ValueError(f"path has {path.shape[-2]} rows; horizon {k} needs {k + 1}")
    if len(roles) != path.shape[-1]:
        raise ValueError("one role per series required")
    out = np.array(path[..., k, :], copy=True)
    if k == 1:
        return out
    for r, role in enumerate(roles):
        if role == "change":
            out[..., r] = path[..., k, r] - path[..., 0, r]
        elif role == "cumulative":
            out[..., r] = path[..., 1:, r].sum(axis=-1)
        elif role != "level":
            raise ValueError(f"unknown series role {role!r}")
    return out


def agent_forecast(state, history, k, n_draws, rng, roles=None, horizon_cap=60):
    """Forecast density for the horizon-``k`` target from the state's origin.

    ``k = 1`` gives the exact one-step Student-T; ``k > 1`` an
    :class:`Empirical` density of ``n_draws`` simulated targets.
    """
    if k < 1 or k > horizon_cap:
        raise ValueError(f"horizon {k} outside 1..{horizon_cap}")
    history = np.asarray(history, dtype=float)
    if k == 1:
        return one_step_density(state, history)
    roles = roles or ["level"] * state.q
    sims = simulate_paths(state, history, k, n_draws, rng)
    origin = np.broadcast_to(history[state.t], (n_draws, 1, state.q))
    return Empirical(build_forecast_target(np.concatenate([origin, sims], axis=1), k, roles))


# ---------------------------------------------------------------------------
# Archive

_HEADER = ["origin_date", "target_date", "series", "type", "param_name", "value"]


def _fmt(x):
    return repr(float(x))


@dataclass
class ForecastArchive:
    """Write-once store of agent forecast densities.

    Keys are ``(origin_date, horizon, agent)``; each value is a density for
    the target ``origin_date + horizon`` months.
    """

    series: list
    roles: list
    entries: dict = field(default_factory=dict)

    def add(self, origin, horizon, agent, density):
        key = (origin, int(horizon), agent)
        if key in self.entries:
            raise KeyError(f"forecast already archived for {key}; archive is write-once")
        if density.dim != len(self.series):
            raise ValueError("density dimension does not match the archived series")
        self.entries[key] = density

    def get(self, origin, horizon, agent):
        return self.entries.get((origin, int(horizon), agent))

    def agents(self):
        return sorted({a for _, _, a in self.entries})

    def horizons(self):
        return sorted({k for _, k, _ in self.entries})

    def origins(self, horizon, agent):
        return sorted(o for o, k, a in self.entries if k == horizon and a == agent)

    def __len__(self):
        return len(self.entries)

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "meta.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["series", "role"])
            w.writerows(zip(self.series, self.roles))
        groups = {}
        for (origin, k, agent) in sorted(self.entries, key=lambda key: (key[2], key[1], months.to_index(key[0]))):
            groups.setdefault((agent, k), []).append(origin)
        for (agent, k), origins in groups.items():
            path = os.path.join(directory, f"{agent}_k{k}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(_HEADER)
                for origin in origins:
                    target = months.shift(origin, k)
                    w.writerows([origin, target, *row] for row in self._rows(self.entries[(origin, k, agent)]))

    def _rows(self, d):
        names = self.series
        if d.kind == "student_t":
            yield "", d.kind, "dof", _fmt(d.dof)
            for r, nm in enumerate(names):
                yield nm, d.kind, "loc", _fmt(d.loc[r])
            for r, nm in enumerate(names):
                for s, nm2 in enumerate(names):
                    yield nm, d.kind, f"scale:{nm2}", _fmt(d.scale[r, s])
        elif d.kind == "normal":
            for r, nm in enumerate(names):
                yield nm, d.kind, "mean", _fmt(d.mean[r])
            for r, nm in enumerate(names):
                for s, nm2 in enumerate(names):
                    yield nm, d.kind, f"cov:{nm2}", _fmt(d.cov[r, s])
        else:
            for i, row in enumerate(d.draws):
                for r, nm in enumerate(names):
                    yield nm, d.kind, f"draw:{i}", _fmt(row[r])

    @classmethod
    def load(cls, directory):
        meta = os.path.join(directory, "meta.csv")
        if not os.path.exists(meta):
            raise DataError(f"no archive metadata at {meta}")
        with open(meta, newline="") as fh:
            rows = list(csv.DictReader(fh))
        series = [r["series"] for r in rows]
        arch = cls(series=series, roles=[r["role"] for r in rows])
        pos = {nm: i for i, nm in enumerate(series)}
        q = len(series)
        pat = re.compile(r"^(.+)_k(\d+)\.csv$")
        for fname in sorted(os.listdir(directory)):
            m = pat.match(fname)
            if not m:
                continue
            agent, k = m.group(1), int(m.group(2))
            with open(os.path.join(directory, fname), newline="") as fh:
                reader = csv.reader(fh)
                if next(reader) != _HEADER:
                    raise DataError(f"{fname}: unexpected header")
                cur, buf = None, []
                for row in reader:
                    if cur is not None and row[0] != cur:
                        arch.add(cur, k, agent, _decode(buf, pos, q))
                        buf = []
                    cur = row[0]
                    buf.append(row)
                if cur is not None:
                    arch.add(cur, k, agent, _decode(buf, pos, q))
        return arch


def _decode(rows, pos, q):
    kind = rows[0][3]
    if kind == "student_t":
        dof, loc, scale = None, np.zeros(q), np.zeros((q, q))
        for _, _, nm, _, pname, val in rows:
            if pname == "dof":
                dof = float(val)
            elif pname == "loc":
                loc[pos[nm]] = float(val)
            else:
                scale[pos[nm], pos[pname.split(":", 1)[1]]] = float(val)
        return StudentT(dof, loc, scale)
    if kind == "normal":
        mean, cov = np.zeros(q), np.zeros((q, q))
        for _, _, nm, _, pname, val in rows:
            if pname == "mean":
                mean[pos[nm]] = float(val)
            else:
                cov[pos[nm], pos[pname.split(":", 1)[1]]] = float(val)
        return Normal(mean, cov)
    if kind == "empirical":
        n = 1 + max(int(r[4].split(":", 1)[1]) for r in rows)
        draws = np.zeros((n, q))
        for _, _, nm, _, pname, val in rows:
            draws[int(pname.split(":", 1)[1]), pos[nm]] = float(val)
        return Empirical(draws)
    raise DataError(f"unknown density type {kind!r} in archive")


def to_student_t(density, dof):
    """Moment-matched Student-T for an empirical density (pass-through otherwise)."""
    if density.kind != "empirical":
        return density
    return fit_student_t(density.draws, dof)
