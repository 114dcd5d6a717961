import numpy as np
import pytest

import oracles
from bpsynth import (BpsPrior, Empirical, McmcConfig, Normal, StudentT, forecast_one_step,
                     gibbs_sweep, run_mcmc)
from bpsynth.synthesizer import initial_state


def _toy(rng, T=12, J=2, q=2, kind="normal"):
    y = rng.standard_normal((T, q))
    dens = []
    for _ in range(T):
        row = []
        for _ in range(J):
            loc = rng.standard_normal(q) * 0.3
            if kind == "normal":
                row.append(Normal(loc, 0.2 * np.eye(q)))
            elif kind == "student_t":
                row.append(StudentT(6.0, loc, 0.2 * np.eye(q)))
            else:
                row.append(Empirical(loc + 0.4 * rng.standard_normal((50, q))))
        dens.append(row)
    return y, dens, BpsPrior.default(J, q)


@pytest.mark.parametrize("kind", ["normal", "student_t", "empirical"])
def test_run_shapes_and_finite_loglik(rng, kind):
    y, dens, prior = _toy(rng, kind=kind)
    d = run_mcmc(y, dens, prior, McmcConfig(burn_in=5, n_saved=20, seed=1))
    T, q = y.shape
    assert d.theta.shape == (20, T, prior.m0.size)
    assert d.X.shape == (20, T, 2, q)
    assert np.all(np.isfinite(d.loglik))
    fc = forecast_one_step(d, dens[-1], prior, rng)
    assert fc.samples.shape == (20, q) and np.all(np.isfinite(fc.samples))


def test_single_saved_draw_without_burn_in(rng):
    y, dens, prior = _toy(rng, T=3)
    d = run_mcmc(y, dens, prior, McmcConfig(burn_in=0, n_saved=1, seed=0), keep_paths=False)
    assert d.n_saved == 1 and d.theta.shape[1] == 1
    assert forecast_one_step(d, dens[-1], prior, rng).n_samples == 1


def test_same_seed_same_draws(rng):
    y, dens, prior = _toy(rng)
    cfg = McmcConfig(burn_in=3, n_saved=10, seed=42)
    a = run_mcmc(y, dens, prior, cfg)
    b = run_mcmc(y, dens, prior, cfg)
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_array_equal(a.X, b.X)
    c = run_mcmc(y, dens, prior, McmcConfig(burn_in=3, n_saved=10, seed=43))
    assert not np.array_equal(a.theta, c.theta)


def test_thinning_saves_every_kth(rng):
    y, dens, prior = _toy(rng, T=4)
    full = run_mcmc(y, dens, prior, McmcConfig(burn_in=0, n_saved=6, seed=3))
    thin = run_mcmc(y, dens, prior, McmcConfig(burn_in=0, n_saved=3, seed=3, thin=2))
    np.testing.assert_array_equal(thin.theta, full.theta[1::2])


def test_deterministic_synthesis_reproduces_weighted_sum():
    """Point-mass agents, zero coefficient uncertainty and no drift: the
    forecast mean is the prior-weighted agent combination."""
    rng = np.random.default_rng(0)
    T, q = 5, 1
    dens = [[Empirical([[1.0]]), Empirical([[3.0]])]] * T
    y = np.full((T, 1), 2.0)
    prior = BpsPrior(m0=[0.0, 0.5, 0.5], C0=np.zeros((3, 3)), n0=50.0, D0=[[1e-4]],
                     delta=1.0, beta=1.0)
    d = run_mcmc(y, dens, prior, McmcConfig(burn_in=2, n_saved=200, seed=0))
    np.testing.assert_allclose(d.theta, np.broadcast_to([0.0, 0.5, 0.5], d.theta.shape))
    fc = forecast_one_step(d, [Empirical([[2.0]]), Empirical([[4.0]])], prior, rng)
    np.testing.assert_allclose(fc.loc, 3.0)
    assert abs(fc.samples.mean() - 3.0) < 0.01


def test_block_order_does_not_change_stationary_law():
    c = oracles.AC2_CASE
    dens = [[Normal([a], [[h]])] for a, h in zip(c["a"], c["H"])]
    prior = BpsPrior(m0=c["m0"], C0=np.diag(c["C0"]), n0=c["n0"], D0=[[c["D0"]]], delta=1.0, beta=1.0)
    y = c["y"][:, None]
    means = []
    for order in ((1, 2, 3), (3, 2, 1)):
        d = run_mcmc(y, dens, prior, McmcConfig(burn_in=500, n_saved=20_000, seed=5), order=order)
        means.append(np.r_[d.theta_T.mean(axis=0), d.X[:, :, 0, 0].mean(axis=0)])
    ref = np.array([oracles.FROZEN["ac2_mean"][k] for k in ("c", "b", "x1", "x2")])
    for m in means:
        np.testing.assert_allclose(m, ref, rtol=0.03)
    with pytest.raises(ValueError):
        run_mcmc(y, dens, prior, McmcConfig(n_saved=1), order=(1, 1, 2))


def test_gibbs_sweep_updates_in_place(rng):
    y, dens, prior = _toy(rng, T=4)
    st = initial_state(y, dens, prior, rng)
    before = st.theta.copy()
    gibbs_sweep(st, y, dens, prior, rng)
    assert not np.array_equal(before, st.theta)
    assert st.h is not None and st.C_T is not None


def test_prior_and_input_validation(rng):
    y, dens, prior = _toy(rng, T=4)
    with pytest.raises(ValueError):
        run_mcmc(y[:3], dens, prior, McmcConfig(n_saved=1))
    with pytest.raises(ValueError):
        run_mcmc(y, dens, BpsPrior.default(3, 2), McmcConfig(n_saved=1))
    with pytest.raises(ValueError):
        McmcConfig(n_saved=0)
    with pytest.raises(ValueError):
        BpsPrior(m0=[0.0, 1.0], C0=np.eye(2), n0=5.0, D0=[[1.0]], delta=1.2)
    with pytest.raises(ValueError):
        run_mcmc(y, dens, prior, McmcConfig(n_saved=1), keep_paths="some")


def test_default_prior_layout():
    p = BpsPrior.default(3, 2, intercept_var=0.01, coef_var=2.0, series_coef_var={1: 0.1})
    np.testing.assert_allclose(p.m0, [0, 1 / 3, 1 / 3, 1 / 3] * 2)
    np.testing.assert_allclose(np.diag(p.C0), [0.01, 2, 2, 2, 0.01, 0.1, 0.1, 0.1])
    assert p.n_agents == 3 and p.q == 2
