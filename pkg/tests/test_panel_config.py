import numpy as np
import pytest

from bpsynth import load_panel, parse_config, save_panel, synth_generate
from bpsynth.errors import ConfigError, DataError
from bpsynth.months import month_range, shift, to_index, to_label
from bpsynth.panel import SynthSpec, TimeSeriesPanel


def test_month_arithmetic():
    assert to_label(to_index("1999-12") + 1) == "2000-01"
    assert shift("2001-01", -13) == "1999-12"
    assert month_range("2000-11", "2001-02") == ["2000-11", "2000-12", "2001-01", "2001-02"]
    with pytest.raises(ValueError):
        to_index("2000-13")


def test_panel_round_trip(tmp_path):
    p = synth_generate(SynthSpec(n_series=3, n_obs=40), 5)
    save_panel(p, tmp_path / "p.csv")
    back = load_panel(tmp_path / "p.csv")
    assert back.dates == p.dates and back.names == p.names
    np.testing.assert_array_equal(back.values, p.values)


@pytest.mark.parametrize("body, msg", [
    ("date,a\n2000-01,1\n2000-03,2\n", "gap"),
    ("date,a\n2000-01,1\n2000-01,2\n", "duplicate"),
    ("date,a\n2000-01,1\n2000-02,x\n", "non-numeric"),
    ("date,a\n2000-01,1\n2000-02,nan\n", "non-finite"),
    ("when,a\n2000-01,1\n", "header"),
    ("date,a\n2000-01,1,2\n", "fields"),
    ("", "empty"),
])
def test_bad_panels(tmp_path, body, msg):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(DataError, match=msg):
        load_panel(path)


def test_missing_panel_file(tmp_path):
    with pytest.raises(DataError):
        load_panel(tmp_path / "nope.csv")


def test_panel_index_and_window():
    p = TimeSeriesPanel(["2000-01", "2000-02", "2000-03"], np.arange(6.0).reshape(3, 2), ["a", "b"])
    assert p.index_of("2000-03") == 2
    assert p.window("2000-02", "2000-03").values.tolist() == [[2.0, 3.0], [4.0, 5.0]]
    with pytest.raises(DataError):
        p.index_of("1999-12")


def test_synth_default_length_and_determinism():
    a = synth_generate(SynthSpec(), 3)
    b = synth_generate(SynthSpec(), 3)
    assert a.T == 360 and a.dates[0] == "1986-01" and a.dates[-1] == "2015-12"
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, synth_generate(SynthSpec(), 4).values)


def test_zero_noise_is_deterministic_recursion():
    spec = SynthSpec(n_series=2, n_obs=30, noise_sd=0.0, amp=0.0)
    p = synth_generate(spec, 0)
    A0, c, _, _ = spec.resolve()
    np.testing.assert_allclose(p.values, np.broadcast_to(np.linalg.solve(np.eye(2) - A0, c), (30, 2)))


def test_ar_autocorrelation():
    p = synth_generate(SynthSpec(n_series=1, n_obs=20_000, A0=[[0.9]], amp=0.0, intercept=0.0), 1)
    y = p.values[:, 0] - p.values[:, 0].mean()
    assert abs(np.dot(y[1:], y[:-1]) / np.dot(y, y) - 0.9) < 0.05


def test_unstable_dgp_rejected():
    with pytest.raises(ConfigError):
        synth_generate(SynthSpec(n_series=1, A0=[[0.95]], amp=0.1), 0)


# -- config ----------------------------------------------------------------------

def test_defaults():
    cfg = parse_config("")
    assert cfg.horizons == [1, 12, 24]
    assert [a.name for a in cfg.agents] == ["M1", "M2", "M3", "M4", "M5"]
    assert cfg.agents[4].lags.lags == (1, 6, 12)
    assert (cfg.bps_start, cfg.test_start, cfg.test_end) == ("1993-07", "2001-01", "2015-12")
    assert cfg.intercept_var(1) == 0.001 and cfg.intercept_var(12) == 0.01 and cfg.intercept_var(24) == 0.1
    assert cfg.series_coef_var(["p", "i"]) == {1: 0.1}
    assert cfg.roles(["p", "i", "r", "z"]) == ["change", "cumulative", "level", "level"]


def test_overrides_and_comments():
    cfg = parse_config("# comment\nrun.seed = 4\nseries.z.role=change\n", overrides={"run.horizons": "3,1"})
    assert cfg.seed == 4 and cfg.horizons == [1, 3]
    assert cfg.roles(["z"]) == ["change"]


@pytest.mark.parametrize("text", [
    "noseparator", "justkey=1", "run.horizons=0", "run.horizons=61", "run.horizons=a",
    "agents.list=A", "agents.list=M1,M1", "agents.M1.lags=1:5:12", "agents.delta=1.5",
    "mcmc.n_saved=0", "run.seed=-1", "agents.density=kde", "bps.init=zero",
    "schedule.test_start=1990-01", "series.p.role=rate", "run.save_archive=maybe",
    "bps.coef_var=0", "agents.student_t_dof=2", "schedule.bps_start=1993-13",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)
