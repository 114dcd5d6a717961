import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from bpsynth import (Empirical, ForecastArchive, Normal, StudentT, agent_forecast,
                     build_forecast_target, fit_tvpvar_filter, parse_lag_spec)
from bpsynth.agents import TvpVarPrior, TvpVarState, default_role, one_step_density, simulate_paths
from bpsynth.errors import DataError


@pytest.mark.parametrize("text, lags", [("1", (1,)), ("3", (1, 2, 3)), ("12", tuple(range(1, 13))),
                                        ("1:3:9", (1, 3, 6, 9)), ("1:6:12", (1, 6, 12))])
def test_lag_specs(text, lags):
    assert parse_lag_spec(text).lags == lags


@pytest.mark.parametrize("text", ["0", "x", "1:5:12", "1:0:3", "1-3", ""])
def test_bad_lag_specs(text):
    with pytest.raises(ValueError):
        parse_lag_spec(text)


def test_roles():
    assert [default_role(n) for n in "pwucir"] == ["change"] * 4 + ["cumulative", "level"]
    assert default_role("gdp") == "level"


def _ar1(n, phi, c, sd, seed):
    rng = np.random.default_rng(seed)
    y = np.empty(n)
    y[0] = c / (1 - phi)
    for t in range(1, n):
        y[t] = c + phi * y[t - 1] + sd * rng.standard_normal()
    return y


def test_static_filter_reproduces_least_squares():
    y = _ar1(500, 0.7, 0.3, 0.5, 1)
    st_ = fit_tvpvar_filter(y[:, None], "1", delta=1.0, beta=1.0,
                            prior=TvpVarPrior(coef_var=1e8, n0=1.0, d0_scale=1.0))[-1]
    X = np.column_stack([np.ones(499), y[:-1]])
    ls = np.linalg.lstsq(X, y[1:], rcond=None)[0]
    np.testing.assert_allclose(st_.M[:, 0], ls, atol=1e-3)


def test_scalar_filter_against_direct_recursion():
    y = np.array([0.5, 0.9, 0.2, 1.4, 0.8, 1.1])
    delta, beta, n0, s0, cv = 0.9, 0.95, 5.0, 0.02, 2.0
    states = fit_tvpvar_filter(y[:, None], "1", delta, beta, TvpVarPrior(cv, n0, s0))
    m, C, n, d = np.zeros(2), cv * np.eye(2), n0, n0 * s0
    for t in range(1, len(y)):
        x = np.array([1.0, y[t - 1]])
        R = C / delta
        Q = x @ R @ x + 1.0
        e = y[t] - x @ m
        A = R @ x / Q
        m, C = m + A * e, R - np.outer(A, A) * Q
        n, d = beta * n + 1, beta * d + e * e / Q
    last = states[-1]
    np.testing.assert_allclose(last.M[:, 0], m)
    np.testing.assert_allclose(last.C, C)
    assert last.n == pytest.approx(n) and last.D[0, 0] == pytest.approx(d)


def test_filter_length_and_short_panel():
    Y = np.random.default_rng(0).standard_normal((20, 2))
    assert len(fit_tvpvar_filter(Y, parse_lag_spec("1:3:9"))) == 20 - 9
    with pytest.raises(DataError):
        fit_tvpvar_filter(Y[:5], "6")


def test_one_step_dof_is_filter_dof():
    Y = np.random.default_rng(1).standard_normal((30, 2))
    state = fit_tvpvar_filter(Y, "2", 0.98, 0.97)[-2]
    dens = one_step_density(state, Y)
    assert isinstance(dens, StudentT)
    assert dens.dof == pytest.approx(state.n)


def test_simulated_one_step_matches_closed_form():
    Y = np.random.default_rng(2).standard_normal((40, 2))
    state = fit_tvpvar_filter(Y, "1", 0.95, 0.95)[-2]
    exact = one_step_density(state, Y)
    sims = simulate_paths(state, Y, 1, 200_000, np.random.default_rng(3))[:, 0]
    mean, cov = exact.moments()
    np.testing.assert_allclose(sims.mean(axis=0), mean, atol=0.01)
    se = np.sqrt(np.outer(np.diag(cov), np.diag(cov)) / len(sims))
    assert np.all(np.abs(np.cov(sims, rowvar=False) - cov) < 5 * se)


def test_deterministic_var_iteration():
    """Zero coefficient and volatility uncertainty: paths iterate the VAR."""
    q = 2
    M = np.array([[0.1, -0.2], [0.5, 0.1], [0.0, 0.3]])
    tiny = 1e-14
    state = TvpVarState(t=4, M=M, C=tiny * np.eye(3), h=1e12, D=1e12 * tiny * np.eye(q),
                        lags=parse_lag_spec("1"), delta=1.0, beta=1.0)
    hist = np.zeros((5, q))
    hist[4] = [1.0, 2.0]
    path = simulate_paths(state, hist, 3, 4, np.random.default_rng(0))
    y = hist[4]
    for s in range(3):
        y = M.T @ np.r_[1.0, y]
        np.testing.assert_allclose(path[:, s], np.broadcast_to(y, (4, q)), atol=1e-5)


def test_single_draw_forecast():
    Y = np.random.default_rng(4).standard_normal((30, 2))
    state = fit_tvpvar_filter(Y, "1")[-1]
    dens = agent_forecast(state, Y, 5, 1, np.random.default_rng(0))
    assert dens.n_draws == 1 and np.all(np.isfinite(dens.draws))
    with pytest.raises(ValueError):
        agent_forecast(state, Y, 61, 10, np.random.default_rng(0))


def test_target_construction():
    path = np.array([[1.0, 10.0, 5.0], [2.0, 11.0, 6.0], [4.0, 13.0, 8.0]])   # origin + 2 steps
    out = build_forecast_target(path, 2, ["change", "cumulative", "level"])
    np.testing.assert_allclose(out, [3.0, 24.0, 8.0])
    one = build_forecast_target(path[:2], 1, ["change", "cumulative", "level"])
    np.testing.assert_allclose(one, path[1])
    with pytest.raises(ValueError):
        build_forecast_target(path, 3, ["level"] * 3)


@given(st.integers(1, 6), st.integers(0, 2**31))
def test_horizon_one_is_identity_for_every_role(q, seed):
    path = np.random.default_rng(seed).standard_normal((2, q))
    roles = [("change", "cumulative", "level")[r % 3] for r in range(q)]
    np.testing.assert_array_equal(build_forecast_target(path, 1, roles), path[1])


def test_one_step_predictive_integrates_to_one():
    Y = np.random.default_rng(5).standard_normal((25, 1))
    dens = agent_forecast(fit_tvpvar_filter(Y, "1")[-1], Y, 1, 10, None)
    total, _ = integrate.quad(lambda v: np.exp(dens.logpdf(np.array([v]))), -np.inf, np.inf)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_nested_lag_specs_agree_on_shared_state():
    """Lag sets built from the same panel see the same rows after max_lag."""
    Y = np.random.default_rng(6).standard_normal((40, 2))
    a = fit_tvpvar_filter(Y, "1:6:12")
    b = fit_tvpvar_filter(Y, "12")
    assert [s.t for s in a] == [s.t for s in b]
    assert a[0].M.shape[0] == 1 + 2 * 3 and b[0].M.shape[0] == 1 + 2 * 12


# -- archive --------------------------------------------------------------------

def _archive():
    arc = ForecastArchive(["p", "r"], ["change", "level"])
    rng = np.random.default_rng(7)
    arc.add("2001-01", 1, "M1", StudentT(9.5, [0.1, 1 / 3], [[0.2, 0.01], [0.01, 0.3]]))
    arc.add("2001-01", 12, "M1", Empirical(rng.standard_normal((5, 2))))
    arc.add("2001-02", 1, "M2", Normal([0.0, 0.7], [[1.0, 0.0], [0.0, 2.0]]))
    return arc


def test_archive_round_trip_is_exact(tmp_path):
    arc = _archive()
    arc.save(tmp_path)
    back = ForecastArchive.load(tmp_path)
    assert back.series == arc.series and back.roles == arc.roles
    assert set(back.entries) == set(arc.entries)
    for key, d in arc.entries.items():
        e = back.entries[key]
        assert e.kind == d.kind
        for name in ("dof", "loc", "scale", "mean", "cov", "draws"):
            if hasattr(d, name):
                np.testing.assert_array_equal(getattr(e, name), getattr(d, name))
    assert back.origins(1, "M1") == ["2001-01"]
    assert back.horizons() == [1, 12] and back.agents() == ["M1", "M2"]


def test_archive_is_write_once():
    arc = _archive()
    with pytest.raises(KeyError):
        arc.add("2001-01", 1, "M1", Normal([0.0, 0.0], np.eye(2)))
    with pytest.raises(ValueError):
        arc.add("2001-03", 1, "M1", Normal([0.0], [[1.0]]))
