import numpy as np
import pytest
from hypothesis import given, strategies as st

from bpsynth import _fallback, kernels
from bpsynth._linalg import chol_jitter, psd_factor, spd_inverse
from bpsynth.discount_volatility import _bartlett_factors
from bpsynth.errors import NumericalError

BACKENDS = kernels.available_backends()
needs_ext = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def _spd(rng, n, shift=1.0):
    a = rng.standard_normal((n, n))
    return a @ a.T + shift * np.eye(n)


def _theta_case(rng, T=12, J=3, q=2, delta=0.95):
    p = (J + 1) * q
    y = rng.standard_normal((T, q))
    X = rng.standard_normal((T, J, q))
    V = np.stack([_spd(rng, q, 0.5) for _ in range(T)])
    m0 = rng.standard_normal(p)
    C0 = _spd(rng, p)
    z = rng.standard_normal((T + 1, p))
    return y, X, V, m0, C0, delta, z


@needs_ext
@pytest.mark.parametrize("delta", [0.9, 1.0])
def test_theta_ffbs_backends_agree(rng, delta):
    args = _theta_case(rng, delta=delta)
    ext = kernels.load_backend("cython")
    for a, b in zip(ext.theta_ffbs(*args), _fallback.theta_ffbs(*args)):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


@needs_ext
def test_gaussian_states_backends_agree(rng):
    T, J, q = 9, 3, 2
    p = (J + 1) * q
    y = rng.standard_normal((T, q))
    theta = rng.standard_normal((T, p))
    Vinv = np.stack([_spd(rng, q) for _ in range(T)])
    prec = np.stack([[_spd(rng, q) for _ in range(J)] for _ in range(T)])
    lin = rng.standard_normal((T, J, q))
    phi = rng.gamma(2.0, 1.0, size=(T, J))
    z = rng.standard_normal((T, J * q))
    ext = kernels.load_backend("cython")
    np.testing.assert_allclose(ext.gaussian_states(y, theta, Vinv, prec, lin, phi, z),
                               _fallback.gaussian_states(y, theta, Vinv, prec, lin, phi, z),
                               rtol=1e-10, atol=1e-12)


@needs_ext
@pytest.mark.parametrize("q, beta", [(1, 0.95), (3, 0.99), (5, 0.9)])
def test_vol_backward_backends_agree(rng, q, beta):
    T = 25
    D = np.stack([_spd(rng, q) for _ in range(T + 1)])
    h = np.linspace(5, 30, T + 1)
    A = _bartlett_factors(np.r_[(1 - beta) * h[:T], h[T]], q, rng)
    ext = kernels.load_backend("cython")
    for a, b in zip(ext.vol_backward(D, beta, A), _fallback.vol_backward(D, beta, A)):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-13)


def test_backend_names():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS
    with pytest.raises(ValueError):
        kernels.load_backend("fortran")


def test_design_matrix_layout():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])   # J=2, q=2
    F = _fallback.design_matrix(x)
    np.testing.assert_array_equal(F, [[1, 1, 3, 0, 0, 0], [0, 0, 0, 1, 2, 4]])


def test_chol_jitter_rescues_semidefinite():
    v = np.array([1.0, 2.0, 3.0])
    L = chol_jitter(np.outer(v, v))
    np.testing.assert_allclose(L @ L.T, np.outer(v, v), atol=1e-5)


def test_chol_jitter_gives_up_on_indefinite():
    with pytest.raises(NumericalError):
        chol_jitter(np.diag([1.0, -1.0]))


def test_zero_matrix_has_zero_factor():
    assert not np.any(psd_factor(np.zeros((3, 3))))


@given(st.integers(1, 6), st.integers(0, 2**31))
def test_spd_inverse_property(n, seed):
    rng = np.random.default_rng(seed)
    M = _spd(rng, n)
    np.testing.assert_allclose(spd_inverse(M) @ M, np.eye(n), atol=1e-8)


def test_env_forces_python_backend():
    import subprocess
    import sys
    code = "from bpsynth import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={**__import__("os").environ, "BPS_BACKEND": "python"},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
