"""Flat ``section.key=value`` run configuration."""
import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from .agents import default_role, parse_lag_spec, ROLES
from . import months
from .errors import ConfigError
from .panel import SynthSpec

__all__ = ["RunConfig", "AgentSpec", "load_config", "parse_config", "DEFAULTS"]

DEFAULTS = {
    "data.path": "",
    "schedule.agent_start": "",
    "schedule.bps_start": "1993-07",
    "schedule.test_start": "2001-01",
    "schedule.test_end": "2015-12",
    "run.horizons": "1,12,24",
    "run.seed": "0",
    "run.out_dir": "bps_out",
    "agents.list": "M1,M2,M3,M4,M5",
    "agents.M1.lags": "1",
    "agents.M2.lags": "12",
    "agents.M3.lags": "3",
    "agents.M4.lags": "1:3:9",
    "agents.M5.lags": "1:6:12",
    "agents.delta": "0.99",
    "agents.beta": "0.99",
    "agents.coef_var": "1.0",
    "agents.n0": "7",
    "agents.d0_scale": "0.01",
    "agents.n_draws": "5000",
    "agents.density": "empirical",
    "agents.student_t_dof": "10",
    "run.save_archive": "true",
    "agents.horizon_cap": "60",
    "bps.delta": "0.99",
    "bps.beta": "0.99",
    "bps.n0": "7",
    "bps.d0_scale": "0.01",
    "bps.coef_var": "1.0",
    "bps.intercept_var": "0.001",
    "bps.intercept_var.k12": "0.01",
    "bps.intercept_var.k24": "0.1",
    "bps.series.i.coef_var": "0.1",
    "bps.init": "prior",
    "mcmc.burn_in": "3000",
    "mcmc.n_saved": "5000",
    "mcmc.thin": "1",
    "report.xcorr_dates": "all",
    "synth.n_series": "2",
    "synth.n_obs": "360",
    "synth.start": "1986-01",
    "synth.a_diag": "0.6",
    "synth.a_offdiag": "0.1",
    "synth.intercept": "0.5",
    "synth.noise_sd": "0.3",
    "synth.amp": "0.2",
    "synth.period": "120",
    "synth.names": "",
}

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


@dataclass
class AgentSpec:
    name: str
    lags: object


@dataclass
class RunConfig:
    raw: dict
    data_path: str
    agent_start: str
    bps_start: str
    test_start: str
    test_end: str
    horizons: list
    seed: int
    out_dir: str
    agents: list
    agent_delta: float
    agent_beta: float
    agent_coef_var: float
    agent_n0: float
    agent_d0_scale: float
    n_draws: int
    agent_density: str
    student_t_dof: float
    horizon_cap: int
    bps_delta: float
    bps_beta: float
    bps_n0: float
    bps_d0_scale: float
    coef_var: float
    init_mode: str
    save_archive: bool
    burn_in: int
    n_saved: int
    thin: int
    xcorr_dates: object
    base_dir: str = "."
    roles_override: dict = field(default_factory=dict)
    transforms: dict = field(default_factory=dict)

    def intercept_var(self, k):
        key = f"bps.intercept_var.k{k}"
        return _float(self.raw, key) if key in self.raw else _float(self.raw, "bps.intercept_var")

    def series_coef_var(self, names):
        out = {}
        for r, nm in enumerate(names):
            key = f"bps.series.{nm}.coef_var"
            if key in self.raw:
                out[r] = _float(self.raw, key)
        return out

    def series_intercept_var(self, names, k):
        out = {}
        for r, nm in enumerate(names):
            for key in (f"bps.series.{nm}.intercept_var.k{k}", f"bps.series.{nm}.intercept_var"):
                if key in self.raw:
                    out[r] = _float(self.raw, key)
                    break
        return out

    def roles(self, names):
        return [self.roles_override.get(nm, default_role(nm)) for nm in names]

    def synth_spec(self):
        """:class:`SynthSpec` from the ``synth.*`` keys."""
        raw = self.raw
        q = _int(raw, "synth.n_series")
        if q < 1:
            raise ConfigError("synth.n_series must be positive")
        names = [v.strip() for v in raw["synth.names"].split(",") if v.strip()] or None
        off = _float(raw, "synth.a_offdiag") / max(q - 1, 1)
        A0 = _float(raw, "synth.a_diag") * np.eye(q) + off * (1.0 - np.eye(q))
        return SynthSpec(n_series=q, start=_month(raw, "synth.start"), n_obs=_int(raw, "synth.n_obs"),
                         A0=A0, intercept=_float(raw, "synth.intercept"),
                         noise_sd=_float(raw, "synth.noise_sd"), amp=_float(raw, "synth.amp"),
                         period=_float(raw, "synth.period"), names=names)

    def resolve_path(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


def _float(raw, key):
    try:
        return float(raw[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw[key]!r}") from None


def _int(raw, key):
    try:
        return int(raw[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw[key]!r}") from None


def _month(raw, key):
    try:
        return months.to_label(months.to_index(raw[key]))
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def parse_config(text, base_dir=".", overrides=None):
    """Parse config text into a validated :class:`RunConfig`."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw = dict(DEFAULTS)
    raw.update({k.strip(): v.strip() for k, v in cp.items("config")})
    raw.update(overrides or {})
    return _build(raw, base_dir)


def load_config(path, overrides=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)), overrides)


def _build(raw, base_dir):
    for key in raw:
        if "." not in key:
            raise ConfigError(f"config key {key!r} has no section; use section.key=value")
    try:
        horizons = sorted({int(v) for v in raw["run.horizons"].split(",") if v.strip()})
    except ValueError:
        raise ConfigError(f"run.horizons: bad list {raw['run.horizons']!r}") from None
    cap = _int(raw, "agents.horizon_cap")
    if not horizons or horizons[0] < 1 or horizons[-1] > cap:
        raise ConfigError(f"run.horizons must lie in 1..{cap}")
    names = [a.strip() for a in raw["agents.list"].split(",") if a.strip()]
    if not names or len(set(names)) != len(names):
        raise ConfigError("agents.list must name distinct agents")
    agents = []
    for nm in names:
        key = f"agents.{nm}.lags"
        if key not in raw:
            raise ConfigError(f"missing {key}")
        try:
            agents.append(AgentSpec(nm, parse_lag_spec(raw[key])))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None

    roles, transforms = {}, {}
    for key, val in raw.items():
        parts = key.split(".")
        if parts[0] == "series" and len(parts) == 3:
            if parts[2] == "role":
                if val not in ROLES:
                    raise ConfigError(f"{key}: role must be one of {ROLES}")
                roles[parts[1]] = val
            elif parts[2] == "transform":
                transforms[parts[1]] = val

    density = raw["agents.density"]
    if density not in ("empirical", "student_t"):
        raise ConfigError("agents.density must be 'empirical' or 'student_t'")
    init = raw["bps.init"]
    if init not in ("prior", "observed"):
        raise ConfigError("bps.init must be 'prior' or 'observed'")
    flag = raw["run.save_archive"].lower()
    if flag not in _BOOL:
        raise ConfigError("run.save_archive must be true or false")
    xd = raw["report.xcorr_dates"].strip()
    if xd in ("all", "none", ""):
        xcorr = xd or "none"
    else:
        xcorr = [_month({"d": d}, "d") for d in xd.split(",") if d.strip()]

    cfg = RunConfig(
        raw=raw,
        data_path=raw["data.path"],
        agent_start=_month(raw, "schedule.agent_start") if raw["schedule.agent_start"] else "",
        bps_start=_month(raw, "schedule.bps_start"),
        test_start=_month(raw, "schedule.test_start"),
        test_end=_month(raw, "schedule.test_end"),
        horizons=horizons,
        seed=_int(raw, "run.seed"),
        out_dir=raw["run.out_dir"],
        agents=agents,
        agent_delta=_float(raw, "agents.delta"),
        agent_beta=_float(raw, "agents.beta"),
        agent_coef_var=_float(raw, "agents.coef_var"),
        agent_n0=_float(raw, "agents.n0"),
        agent_d0_scale=_float(raw, "agents.d0_scale"),
        n_draws=_int(raw, "agents.n_draws"),
        agent_density=density,
        student_t_dof=_float(raw, "agents.student_t_dof"),
        horizon_cap=cap,
        bps_delta=_float(raw, "bps.delta"),
        bps_beta=_float(raw, "bps.beta"),
        bps_n0=_float(raw, "bps.n0"),
        bps_d0_scale=_float(raw, "bps.d0_scale"),
        coef_var=_float(raw, "bps.coef_var"),
        init_mode=init,
        save_archive=_BOOL[flag],
        burn_in=_int(raw, "mcmc.burn_in"),
        n_saved=_int(raw, "mcmc.n_saved"),
        thin=_int(raw, "mcmc.thin"),
        xcorr_dates=xcorr,
        base_dir=base_dir,
        roles_override=roles,
        transforms=transforms,
    )
    for name in ("agent_delta", "agent_beta", "bps_delta", "bps_beta"):
        v = getattr(cfg, name)
        if not 0.0 < v <= 1.0:
            raise ConfigError(f"{name.replace('_', '.', 1)} must lie in (0, 1], got {v}")
    if cfg.seed < 0:
        raise ConfigError("run.seed must be nonnegative")
    if cfg.burn_in < 0 or cfg.n_saved < 1 or cfg.thin < 1 or cfg.n_draws < 1:
        raise ConfigError("need mcmc.burn_in >= 0, mcmc.n_saved >= 1, mcmc.thin >= 1, agents.n_draws >= 1")
    if min(cfg.coef_var, cfg.agent_coef_var, cfg.agent_d0_scale, cfg.bps_d0_scale) <= 0:
        raise ConfigError("prior variances and volatility scales must be positive")
    if cfg.student_t_dof <= 2:
        raise ConfigError("agents.student_t_dof must exceed 2")
    if not (months.to_index(cfg.bps_start) <= months.to_index(cfg.test_start)
            <= months.to_index(cfg.test_end)):
        raise ConfigError("schedule must satisfy bps_start <= test_start <= test_end")
    return cfg
