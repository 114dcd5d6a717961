import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from bpsynth import (Empirical, Normal, StudentT, sample_phi, sample_states_empirical,
                     sample_states_normal, sample_states_t)
from bpsynth.agent_states import AgentPriors, importance_weights


def _brute_force_conditional(theta, V, y, agents):
    """Mean and covariance of vec(X) | y by conditioning the joint normal."""
    J, q = len(agents), len(y)
    th = np.asarray(theta).reshape(q, J + 1)
    mu_x = np.concatenate([a.mean for a in agents])
    S_x = np.zeros((J * q, J * q))
    for j, a in enumerate(agents):
        S_x[j * q:(j + 1) * q, j * q:(j + 1) * q] = a.cov
    B = np.zeros((q, J * q))   # y = c + B vec(X) + nu
    for j in range(J):
        B[:, j * q:(j + 1) * q] = np.diag(th[:, j + 1])
    mu_y = th[:, 0] + B @ mu_x
    S_y = B @ S_x @ B.T + V
    K = S_x @ B.T @ np.linalg.inv(S_y)
    return mu_x + K @ (y - mu_y), S_x - K @ B @ S_x


def _random_normal(rng, q):
    a = rng.standard_normal((q, q))
    return Normal(rng.standard_normal(q), a @ a.T + 0.3 * np.eye(q))


def test_gaussian_states_match_brute_force(rng):
    q, J, n = 2, 3, 40_000
    agents = [_random_normal(rng, q) for _ in range(J)]
    theta = rng.standard_normal((J + 1) * q)
    V = np.array([[0.5, 0.1], [0.1, 0.3]])
    y = rng.standard_normal(q)
    ap = AgentPriors([agents] * n)
    from bpsynth.agent_states import update_states
    X, _ = update_states(ap, np.zeros((n, J, q)), np.ones((n, J)), np.tile(y, (n, 1)),
                         np.tile(theta, (n, 1)), np.tile(np.linalg.inv(V), (n, 1, 1)), rng)
    m, S = _brute_force_conditional(theta, V, y, agents)
    flat = X.reshape(n, -1)
    np.testing.assert_allclose(flat.mean(axis=0), m, atol=4 * np.sqrt(np.diag(S).max() / n))
    np.testing.assert_allclose(np.cov(flat, rowvar=False), S, atol=0.03 * np.abs(S).max())


def test_single_point_entry_points_shapes(rng):
    q, J = 2, 2
    theta = rng.standard_normal((J + 1) * q)
    normals = [_random_normal(rng, q) for _ in range(J)]
    assert sample_states_normal(theta, np.eye(q), np.zeros(q), normals, rng).shape == (J, q)
    ts = [StudentT(5.0, d.mean, d.cov) for d in normals]
    assert sample_states_t(theta, np.eye(q), np.zeros(q), ts, np.ones(J), rng).shape == (J, q)
    emps = [Empirical(rng.standard_normal((30, q))) for _ in range(J)]
    assert sample_states_empirical(theta, np.eye(q), np.zeros(q), emps, rng).shape == (J, q)
    with pytest.raises(TypeError):
        sample_states_normal(theta, np.eye(q), np.zeros(q), ts, rng)
    with pytest.raises(ValueError):
        sample_states_t(theta, np.eye(q), np.zeros(q), ts, np.array([1.0, 0.0]), rng)


def test_t_states_with_unit_scale_match_normal():
    q, J = 1, 2
    rng = np.random.default_rng(2)
    normals = [Normal([0.3], [[0.4]]), Normal([-0.2], [[0.9]])]
    ts = [StudentT(4.0, d.mean, d.cov) for d in normals]
    theta = np.array([0.1, 0.6, 0.5])
    a = sample_states_normal(theta, [[0.2]], [0.7], normals, np.random.default_rng(9))
    b = sample_states_t(theta, [[0.2]], [0.7], ts, np.ones(J), np.random.default_rng(9))
    np.testing.assert_allclose(a, b)


def test_phi_conditional_matches_quadrature():
    c = oracles.AC5_CASE
    agent = StudentT(c["dof"], c["h"], c["H"])
    n = 100_000
    phi = sample_phi(np.tile(c["x"], (n, 1)), [agent] * n, np.random.default_rng(1))
    ref = oracles.phi_posterior_mean_quad(c["x"], c["h"], c["H"], c["dof"])
    assert phi.mean() == pytest.approx(ref, rel=0.01)
    with pytest.raises(ValueError):
        sample_phi([[np.nan, 0.0]], [agent], np.random.default_rng(1))


def test_empirical_update_targets_likelihood():
    """With many candidate draws, resampling approximates the exact posterior
    for a normal agent."""
    rng = np.random.default_rng(4)
    q = 1
    prior = Normal([0.0], [[1.0]])
    emp = Empirical(prior.sample(rng, size=4000))
    theta = np.array([0.0, 1.0])
    V, y = 0.5, 1.0
    draws = np.array([sample_states_empirical(theta, [[V]], [y], [emp], rng)[0, 0] for _ in range(4000)])
    post_mean = y / (1 + V)
    post_sd = np.sqrt(V / (1 + V))
    assert abs(draws.mean() - post_mean) < 5 * post_sd / np.sqrt(4000) + 0.02
    assert draws.std() == pytest.approx(post_sd, rel=0.08)
    assert sample_states_empirical(theta, [[V]], [y], [emp], rng, joint=True).shape == (1, q)


@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=30))
def test_importance_weights_are_probabilities(ll):
    w = importance_weights(np.array(ll))
    assert np.all(w >= 0)
    assert w.sum() == pytest.approx(1.0)


def test_importance_weights_all_neg_inf_fall_back_to_uniform():
    w = importance_weights(np.full((2, 4), -np.inf))
    np.testing.assert_allclose(w, 0.25)


def test_priors_reject_mixed_families():
    with pytest.raises(ValueError):
        AgentPriors([[Normal([0.0], [[1.0]])], [StudentT(4.0, [0.0], [[1.0]])]])


def test_observed_initialization_copies_y(rng):
    ap = AgentPriors([[Normal([0.0], [[1.0]])] * 2] * 3)
    y = np.arange(3.0)[:, None]
    X, phi = ap.initial_states(rng, mode="observed", y=y)
    np.testing.assert_array_equal(X[:, 1, 0], [0, 1, 2])
    with pytest.raises(ValueError):
        ap.initial_states(rng, mode="other")
