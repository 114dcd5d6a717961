"""Expanding-window orchestration: agent archives, BPS(k) runs and reports.

Every (agent, horizon, origin) forecast and every (horizon, origin) BPS
analysis draws from its own stream derived from the master seed, so results
do not depend on how jobs are scheduled across workers.
"""
import csv
import logging
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import months
from .agents import ForecastArchive, agent_forecast, build_forecast_target, fit_tvpvar_filter, \
    TvpVarPrior, to_student_t
from .errors import ConfigError, DataError, NumericalError
from .evaluation import cumulative_msfe, kl_mc, lpdr, msfe, predictive_logpdf
from .synthesizer import BpsPrior, McmcConfig, forecast_one_step, run_mcmc

__all__ = [
    "worker_count",
    "agent_origins",
    "realized_target",
    "fit_agents",
    "BpsDataset",
    "build_bps_k_dataset",
    "align_one_step",
    "bps_prior",
    "OriginResult",
    "SequentialResult",
    "sequential_run",
    "write_csv",
    "write_synthesis",
    "write_gaps",
    "bma_weight_table",
    "kl_rows",
    "latent_correlation",
    "evaluate",
]

log = logging.getLogger(__name__)

_AGENT_STREAM, _BPS_STREAM = 1, 2


def worker_count(n_jobs):
    """Pool size: ``BPS_THREADS`` if set, else the CPU count, never above ``n_jobs``."""
    env = os.environ.get("BPS_THREADS", "").strip()
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"BPS_THREADS must be an integer, got {env!r}") from None
        if cap < 1:
            raise ConfigError("BPS_THREADS must be at least 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


_CTX = {}


def _set_ctx(ctx):
    _CTX.clear()
    _CTX.update(ctx)


def _pool_map(fn, items, ctx):
    """``[fn(item) for item in items]`` across a process pool sharing ``ctx``."""
    items = list(items)
    n = worker_count(len(items))
    if n <= 1:
        saved = dict(_CTX)
        _set_ctx(ctx)
        try:
            return [fn(item) for item in items]
        finally:
            _set_ctx(saved)
    method = "fork" if "fork" in multiprocessing.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=n, mp_context=multiprocessing.get_context(method),
                             initializer=_set_ctx, initargs=(ctx,)) as pool:
        return list(pool.map(fn, items))


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _unit_key(origin):
    return months.to_index(origin)


# ---------------------------------------------------------------------------
# Agents

def agent_origins(cfg, panel):
    """Origins needing agent forecasts: early enough to pair with the first
    BPS target at every horizon, through the end of the test range."""
    first = months.shift(cfg.bps_start, -max(cfg.horizons))
    start = cfg.agent_start or panel.dates[0]
    if months.to_index(first) < months.to_index(start):
        first = start
    return months.month_range(first, cfg.test_end)


def realized_target(panel, origin, k, roles):
    """Observed horizon-``k`` target for ``origin``, or None if not yet observed."""
    i = months.to_index(origin) - months.to_index(panel.dates[0])
    if i < 0 or i + k >= panel.T:
        return None
    return build_forecast_target(panel.values[i:i + k + 1], k, roles)


def _agent_job(a):
    ctx = _CTX
    spec = ctx["agents"][a]
    values, first_row = ctx["values"], ctx["first_row"]
    cfg = ctx["cfg"]
    prior = TvpVarPrior(cfg.agent_coef_var, cfg.agent_n0, cfg.agent_d0_scale)
    end_row = ctx["end_row"]
    states = fit_tvpvar_filter(values[first_row:end_row + 1], spec.lags, cfg.agent_delta,
                               cfg.agent_beta, prior)
    by_row = {first_row + s.t: s for s in states}
    out, gaps = [], []
    for origin, row in ctx["origins"]:
        st = by_row.get(row)
        if st is None:
            gaps.append(("agents", "", origin, f"{spec.name}: insufficient history for lags {spec.lags.lags}"))
            continue
        hist = values[first_row:row + 1]
        for k in cfg.horizons:
            rng = _stream(cfg.seed, _AGENT_STREAM, a, k, _unit_key(origin))
            try:
                dens = agent_forecast(st, hist, k, cfg.n_draws, rng, ctx["roles"], cfg.horizon_cap)
            except (NumericalError, DataError, np.linalg.LinAlgError) as exc:
                gaps.append(("agents", k, origin, f"{spec.name}: {exc}"))
                continue
            out.append((origin, k, spec.name, dens))
    return out, gaps


def fit_agents(panel, cfg):
    """Filter every agent over the panel and archive its forecasts.

    Returns ``(archive, gaps)``; each gap is ``(stage, horizon, origin, reason)``.
    """
    first_row = panel.index_of(cfg.agent_start) if cfg.agent_start else 0
    end_row = panel.index_of(cfg.test_end)
    origins = [(o, panel.index_of(o)) for o in agent_origins(cfg, panel)]
    roles = cfg.roles(panel.names)
    ctx = dict(cfg=cfg, agents=cfg.agents, values=panel.values, first_row=first_row,
               end_row=end_row, origins=origins, roles=roles)
    results = _pool_map(_agent_job, range(len(cfg.agents)), ctx)
    archive = ForecastArchive(series=list(panel.names), roles=roles)
    gaps = []
    for out, g in results:
        for origin, k, name, dens in out:
            archive.add(origin, k, name, dens)
        gaps.extend(g)
    return archive, gaps


# ---------------------------------------------------------------------------
# BPS datasets

@dataclass
class BpsDataset:
    dates: list              # target months
    y: np.ndarray            # (T, q)
    densities: list          # [T][J]
    gaps: list = field(default_factory=list)

    @property
    def T(self):
        return len(self.dates)


def _use_density(d, cfg):
    if cfg is not None and cfg.agent_density == "student_t":
        return to_student_t(d, cfg.student_t_dof)
    return d


def build_bps_k_dataset(k, archive, panel, agents, start, end, cfg=None):
    """Pair each target month ``s`` in ``[start, end]`` with the agent
    densities issued at ``s - k`` for horizon ``k``.

    Targets use the archive's series roles. Months with a missing forecast
    or an unobservable target are dropped and listed in ``gaps``.
    """
    dates, ys, dens, gaps = [], [], [], []
    for s in months.month_range(start, end):
        origin = months.shift(s, -k)
        row = [archive.get(origin, k, a) for a in agents]
        missing = [a for a, d in zip(agents, row) if d is None]
        if missing:
            gaps.append((s, f"no horizon-{k} forecast from {','.join(missing)} at {origin}"))
            log.info("BPS(%d): dropping %s, missing forecasts from %s", k, s, missing)
            continue
        y = realized_target(panel, origin, k, archive.roles)
        if y is None:
            gaps.append((s, "target not observed"))
            continue
        dates.append(s)
        ys.append(y)
        dens.append([_use_density(d, cfg) for d in row])
    q = len(archive.series)
    return BpsDataset(dates, np.array(ys).reshape(-1, q), dens, gaps)


def align_one_step(archive, panel, agents, start, end, cfg=None):
    """Standard alignment: ``y_s`` with the 1-step densities issued at ``s - 1``."""
    dates, ys, dens, gaps = [], [], [], []
    for s in months.month_range(start, end):
        prev = months.shift(s, -1)
        row = [archive.get(prev, 1, a) for a in agents]
        if any(d is None for d in row):
            gaps.append((s, f"no 1-step forecast at {prev}"))
            continue
        i = months.to_index(s) - months.to_index(panel.dates[0])
        if not 0 <= i < panel.T:
            gaps.append((s, "target not observed"))
            continue
        dates.append(s)
        ys.append(panel.values[i])
        dens.append([_use_density(d, cfg) for d in row])
    q = len(archive.series)
    return BpsDataset(dates, np.array(ys).reshape(-1, q), dens, gaps)


def bps_prior(cfg, k, n_agents, names):
    prior = BpsPrior.default(
        n_agents, len(names), intercept_var=cfg.intercept_var(k), coef_var=cfg.coef_var,
        series_coef_var=cfg.series_coef_var(names), n0=cfg.bps_n0, d0_scale=cfg.bps_d0_scale,
        delta=cfg.bps_delta, beta=cfg.bps_beta)
    for r, v in cfg.series_intercept_var(names, k).items():
        i = r * (n_agents + 1)
        prior.C0[i, i] = v
    return prior


# ---------------------------------------------------------------------------
# Sequential BPS

@dataclass
class OriginResult:
    horizon: int
    origin: str
    target: str
    mean: np.ndarray
    sd: np.ndarray
    quantiles: np.ndarray          # (3, q): 5%, 50%, 95%
    theta_mean: np.ndarray         # (p,)
    logpdf: float = None           # at the realized target, if observed
    n_train: int = 0
    train_dates: list = None
    states: np.ndarray = None      # (S, T, J, q) retrospective latent states


@dataclass
class SequentialResult:
    horizon: int
    results: list
    gaps: list

    def final(self):
        for r in reversed(self.results):
            if r.states is not None:
                return r
        return None


def _bps_job(origin):
    ctx = _CTX
    cfg, k, panel, archive = ctx["cfg"], ctx["k"], ctx["panel"], ctx["archive"]
    agents = ctx["agent_names"]
    build = align_one_step if ctx["standard"] else (
        lambda *a, **kw: build_bps_k_dataset(k, *a, **kw))
    data = build(archive, panel, agents, cfg.bps_start, origin, cfg=cfg)
    gaps = [("synthesize", k, s, f"training target dropped: {why}") for s, why in data.gaps]
    nxt = [archive.get(origin, k, a) for a in agents]
    if any(d is None for d in nxt):
        return None, gaps + [("synthesize", k, origin, "agent forecast missing at origin")]
    if data.T == 0:
        return None, gaps + [("synthesize", k, origin, "no training pairs")]
    nxt = [_use_density(d, cfg) for d in nxt]
    prior = bps_prior(cfg, k, len(agents), panel.names)
    mc = McmcConfig(burn_in=cfg.burn_in, n_saved=cfg.n_saved, seed=cfg.seed, thin=cfg.thin)
    rng = _stream(cfg.seed, _BPS_STREAM, k, _unit_key(origin))
    keep = origin in ctx["keep_states"]
    try:
        draws = run_mcmc(data.y, data.densities, prior, mc, rng=rng, init_mode=cfg.init_mode,
                         keep_paths="states" if keep else False)
        fc = forecast_one_step(draws, nxt, prior, rng)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        return None, gaps + [("synthesize", k, origin, f"numerical failure: {exc}")]
    realized = realized_target(panel, origin, k, archive.roles)
    res = OriginResult(
        horizon=k, origin=origin, target=months.shift(origin, k),
        mean=fc.samples.mean(axis=0),
        sd=fc.samples.std(axis=0, ddof=1) if fc.n_samples > 1 else np.zeros(fc.samples.shape[1]),
        quantiles=np.quantile(fc.samples, [0.05, 0.5, 0.95], axis=0),
        theta_mean=draws.theta_T.mean(axis=0),
        logpdf=None if realized is None else predictive_logpdf(fc, realized),
        n_train=data.T, train_dates=list(data.dates),
        states=draws.X if keep else None)
    return res, gaps


def sequential_run(panel, archive, cfg, k, origins=None, standard=False, keep_states=None):
    """Re-run BPS(k) at every test origin on data up to that origin.

    ``standard=True`` uses the plain one-step alignment (requires k=1).
    ``keep_states`` is a set of origins whose latent-state paths are
    retained; default is the last origin only.
    """
    if standard and k != 1:
        raise ValueError("the standard alignment is the one-step model")
    origins = list(origins or months.month_range(cfg.test_start, cfg.test_end))
    keep_states = set(keep_states) if keep_states is not None else {origins[-1]}
    ctx = dict(cfg=cfg, k=k, panel=panel, archive=archive, agent_names=[a.name for a in cfg.agents],
               standard=standard, keep_states=keep_states)
    out = _pool_map(_bps_job, origins, ctx)
    results, gaps = [], []
    for res, g in out:
        gaps.extend(g)
        if res is not None:
            results.append(res)
    return SequentialResult(k, results, sorted(set(gaps), key=lambda g: (months.to_index(g[2]), g[3])))


# ---------------------------------------------------------------------------
# Reports

def _num(x):
    x = float(x)
    if not np.isfinite(x):
        raise NumericalError(f"non-finite value {x} in report output")
    return repr(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def kl_rows(final, archive, agents, cfg=None):
    """Per (date, agent) Monte Carlo KL of posterior vs prior latent states."""
    rows = []
    for t, date in enumerate(final.train_dates):
        origin = months.shift(date, -final.horizon)
        for j, a in enumerate(agents):
            h = _use_density(archive.get(origin, final.horizon, a), cfg)
            rows.append((date, a, max(kl_mc(final.states[:, t, j], h.logpdf), 0.0)))
    return rows


def latent_correlation(states_t):
    """Correlation of vec(X_t) over draws; agent-major (j, r) ordering."""
    S = states_t.shape[0]
    Z = states_t.reshape(S, -1)
    Z = Z - Z.mean(axis=0)
    cov = Z.T @ Z / max(S - 1, 1)
    sd = np.sqrt(np.diag(cov))
    ok = sd > 0
    corr = np.zeros_like(cov)
    corr[np.ix_(ok, ok)] = cov[np.ix_(ok, ok)] / np.outer(sd[ok], sd[ok])
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


def write_synthesis(run, out_dir, names, agents, archive=None, cfg=None, xcorr_dates="none"):
    """Write forecasts, coefficients, scores, KL and correlation files for one horizon."""
    os.makedirs(out_dir, exist_ok=True)
    k = run.horizon
    J = len(agents)
    rows = []
    for r in run.results:
        for i, nm in enumerate(names):
            q05, q50, q95 = r.quantiles[:, i]
            rows.append((r.origin, r.target, nm, _num(r.mean[i]), _num(r.sd[i]),
                         _num(q05), _num(q50), _num(q95)))
    write_csv(os.path.join(out_dir, f"forecasts_k{k}.csv"),
           ["origin_date", "target_date", "series", "mean", "sd", "q05", "q50", "q95"], rows)
    coef_names = ["intercept"] + [f"agent_{j + 1}" for j in range(J)]
    rows = []
    for r in run.results:
        th = r.theta_mean.reshape(len(names), J + 1)
        for i, nm in enumerate(names):
            rows.extend((r.origin, nm, c, _num(th[i, c_i])) for c_i, c in enumerate(coef_names))
    write_csv(os.path.join(out_dir, f"coefficients_k{k}.csv"),
           ["origin_date", "series", "coef_name", "posterior_mean"], rows)
    write_csv(os.path.join(out_dir, f"bps_scores_k{k}.csv"), ["origin_date", "target_date", "logpdf"],
           [(r.origin, r.target, _num(r.logpdf)) for r in run.results if r.logpdf is not None])
    final = run.final()
    kl = []
    if final is not None and archive is not None:
        kl = [(k, d, a, _num(v)) for d, a, v in kl_rows(final, archive, agents, cfg)]
        if k == 1 and xcorr_dates != "none":
            wanted = set(final.train_dates) if xcorr_dates == "all" else set(xcorr_dates)
            if xcorr_dates == "all" and cfg is not None:
                wanted &= set(months.month_range(cfg.test_start, cfg.test_end))
            labels = [f"{a}:{nm}" for a in agents for nm in names]
            for t, date in enumerate(final.train_dates):
                if date not in wanted:
                    continue
                corr = latent_correlation(final.states[:, t])
                write_csv(os.path.join(out_dir, f"xcorr_{date}.csv"), ["factor", *labels],
                       [(lab, *(_num(v) for v in row)) for lab, row in zip(labels, corr)])
    return kl


def write_gaps(path, gaps):
    rows = sorted({(str(s), str(k), o, why) for s, k, o, why in gaps},
                  key=lambda g: (g[0], g[1], months.to_index(g[2]), g[3]))
    write_csv(path, ["stage", "horizon", "origin_date", "reason"], rows)


# ---------------------------------------------------------------------------
# Evaluation

def _point(d):
    if d.kind == "student_t":
        return d.loc
    return d.moments()[0]


def _read_csv(path):
    if not os.path.exists(path):
        raise DataError(f"missing input {path}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def bma_weight_table(archive, panel, agents, start, end):
    """BMA weights available at each origin in ``[start, end]``.

    Weights are the softmax of cumulative 1-step joint log predictive
    densities of targets up to and including the origin, from ``start``.
    """
    names = list(agents)
    cum = np.zeros(len(names))
    table = {}
    for s in months.month_range(start, end):
        prev = months.shift(s, -1)
        dens = [archive.get(prev, 1, a) for a in names]
        y = realized_target(panel, prev, 1, archive.roles)
        if y is not None and all(d is not None for d in dens):
            cum = cum + np.array([float(d.logpdf(y)) for d in dens])
        w = np.exp(cum - logsumexp(cum))
        table[s] = w / w.sum()
    return table


def evaluate(panel, archive, cfg, out_dir, horizons=None):
    """Score agents, BMA and BPS at every origin with an observed target.

    Reads ``forecasts_k*.csv``/``bps_scores_k*.csv`` from ``out_dir`` and
    writes ``msfe.csv``, ``msfe_path.csv``, ``lpdr.csv``, ``bma_weights.csv``.
    """
    agents = [a.name for a in cfg.agents]
    names = list(panel.names)
    q = len(names)
    tests = months.month_range(cfg.test_start, cfg.test_end)
    bma = bma_weight_table(archive, panel, agents, cfg.bps_start, cfg.test_end)
    write_csv(os.path.join(out_dir, "bma_weights.csv"), ["origin_date", "agent", "weight"],
           [(o, a, _num(w)) for o in tests for a, w in zip(agents, bma[o])])
    msfe_rows, path_rows, lpdr_rows = [], [], []
    for k in horizons or cfg.horizons:
        fc = {}
        for row in _read_csv(os.path.join(out_dir, f"forecasts_k{k}.csv")):
            fc.setdefault(row["origin_date"], {})[row["series"]] = float(row["mean"])
        scores = {row["origin_date"]: float(row["logpdf"])
                  for row in _read_csv(os.path.join(out_dir, f"bps_scores_k{k}.csv"))}
        used, err, lp = [], {m: [] for m in agents + ["BMA", "BPS"]}, {m: [] for m in agents + ["BMA", "BPS"]}
        for o in tests:
            y = realized_target(panel, o, k, archive.roles)
            dens = [archive.get(o, k, a) for a in agents]
            if y is None or o not in scores or o not in fc or any(d is None for d in dens):
                continue
            used.append(o)
            alp = np.array([float(d.logpdf(y)) for d in dens])
            w = bma[o]
            for a, d, v in zip(agents, dens, alp):
                err[a].append(y - _point(d))
                lp[a].append(v)
            err["BMA"].append(y - sum(wj * _point(d) for wj, d in zip(w, dens)))
            with np.errstate(divide="ignore"):
                lp["BMA"].append(float(logsumexp(alp + np.log(w))))
            err["BPS"].append(y - np.array([fc[o][nm] for nm in names]))
            lp["BPS"].append(scores[o])
        if not used:
            log.warning("horizon %d: no origin with an observed target; skipping scores", k)
            continue
        for m in err:
            e = np.array(err[m]).reshape(-1, q)
            for nm, v in zip(names, msfe(e)):
                msfe_rows.append((k, m, nm, len(used), _num(v)))
            cum = cumulative_msfe(e)
            for i, o in enumerate(used):
                path_rows.extend((k, o, m, nm, _num(cum[i, r])) for r, nm in enumerate(names))
            curve = lpdr(lp[m], lp["BPS"])
            lpdr_rows.extend((k, o, m, _num(v)) for o, v in zip(used, curve))
    write_csv(os.path.join(out_dir, "msfe.csv"), ["horizon", "model", "series", "n_origins", "msfe"], msfe_rows)
    write_csv(os.path.join(out_dir, "msfe_path.csv"), ["horizon", "origin_date", "model", "series", "msfe_cum"],
           path_rows)
    write_csv(os.path.join(out_dir, "lpdr.csv"), ["horizon", "origin_date", "model", "lpdr"], lpdr_rows)
    return msfe_rows, lpdr_rows
