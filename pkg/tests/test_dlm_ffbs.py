import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from bpsynth import DiscountConfig, backward_sample_theta, forward_filter_step, sample_theta_path
from bpsynth._fallback import design_matrix
from bpsynth.dlm_ffbs import ThetaFilterStats, coef_index
from bpsynth.errors import NumericalError


def _joint_gaussian_step(m, C, F, y, V, delta):
    """Posterior of theta_t by conditioning the joint normal of (theta_t, y_t)."""
    R = C / delta
    S = np.block([[R, R @ F.T], [F @ R, F @ R @ F.T + V]])
    p = len(m)
    mu = np.r_[m, F @ m]
    K = S[:p, p:] @ np.linalg.inv(S[p:, p:])
    return mu[:p] + K @ (y - mu[p:]), S[:p, :p] - K @ S[p:, :p]


@given(st.integers(1, 3), st.integers(0, 3), st.floats(0.5, 1.0), st.integers(0, 2**31))
def test_forward_step_matches_gaussian_conditioning(q, J, delta, seed):
    rng = np.random.default_rng(seed)
    p = (J + 1) * q
    a = rng.standard_normal((p, p))
    C = a @ a.T + np.eye(p)
    m = rng.standard_normal(p)
    F = design_matrix(rng.standard_normal((J, q)))
    b = rng.standard_normal((q, q))
    V = b @ b.T + 0.5 * np.eye(q)
    y = rng.standard_normal(q)
    out = forward_filter_step(ThetaFilterStats(m, C), F, y, V, delta)
    m_ref, C_ref = _joint_gaussian_step(m, C, F, y, V, delta)
    np.testing.assert_allclose(out.m, m_ref, atol=1e-8)
    np.testing.assert_allclose(out.C, C_ref, atol=1e-8)


def test_forward_step_rejects_bad_input():
    prev = ThetaFilterStats(np.zeros(2), np.eye(2))
    F = np.array([[1.0, 0.5]])
    with pytest.raises(ValueError):
        forward_filter_step(prev, F, [0.0], [[1.0]], 1.5)
    with pytest.raises(ValueError):
        forward_filter_step(prev, np.ones((1, 3)), [0.0], [[1.0]], 0.9)
    with pytest.raises(NumericalError):
        forward_filter_step(prev, F, [0.0], [[-1.0]], 0.9)


def test_discount_config_validation():
    DiscountConfig(1.0, 0.5)
    with pytest.raises(ValueError):
        DiscountConfig(0.0, 0.9)


def test_coef_index_layout():
    assert coef_index(0, -1, 3) == 0
    assert coef_index(0, 0, 3) == 1
    assert coef_index(1, -1, 3) == 4
    assert coef_index(2, 2, 3) == 11


def test_stepwise_and_fused_paths_agree(rng):
    """The per-step filter plus sampler reproduces the fused kernel draw."""
    c = oracles.AC3_CASE
    y = c["y"]
    stats, prev = [], ThetaFilterStats(np.array([c["m0"]]), np.array([[c["C0"]]]))
    for yt in y:
        prev = forward_filter_step(prev, [[1.0]], [yt], [[c["V"]]], c["delta"])
        stats.append(prev)
    th_a = backward_sample_theta(stats, ([c["m0"]], [[c["C0"]]]), c["delta"], np.random.default_rng(7))
    T = len(y)
    th_b, m, C = sample_theta_path(y[:, None], np.zeros((T, 0, 1)), np.full((T, 1, 1), c["V"]),
                                   [c["m0"]], [[c["C0"]]], c["delta"], np.random.default_rng(7))
    np.testing.assert_allclose(th_a, th_b, atol=1e-12)
    np.testing.assert_allclose(m[1:, 0], [s.m[0] for s in stats], atol=1e-12)


def test_ffbs_smoothed_variance_matches_rts():
    c = oracles.AC3_CASE
    T = len(c["y"])
    rng = np.random.default_rng(11)
    n = 20_000
    draws = np.empty((n, T + 1))
    for s in range(n):
        draws[s] = sample_theta_path(c["y"][:, None], np.zeros((T, 0, 1)), np.full((T, 1, 1), c["V"]),
                                     [c["m0"]], [[c["C0"]]], c["delta"], rng)[0][:, 0]
    _, S = oracles.rts_smoother(c["y"], c["V"], c["m0"], c["C0"], c["delta"])
    np.testing.assert_allclose(draws.var(axis=0), S, rtol=0.05)


def test_delta_one_gives_constant_path(rng):
    T = 6
    th = sample_theta_path(rng.standard_normal((T, 2)), rng.standard_normal((T, 1, 2)),
                           np.repeat(np.eye(2)[None], T, axis=0), np.zeros(4), np.eye(4), 1.0, rng)[0]
    np.testing.assert_allclose(th - th[-1], 0.0, atol=1e-12)
