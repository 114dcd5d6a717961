"""Small dense linear-algebra helpers shared by the sampling blocks."""
import numpy as np

from .errors import NumericalError

JITTER_START = 1e-10
JITTER_MAX = 1e-6


def symmetrize(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def chol_jitter(M, what="matrix"):
    """Lower Cholesky factor of a symmetric matrix with escalating jitter.

    Tries the plain factorization first, then adds ``s * trace(M)/dim`` to the
    diagonal for ``s`` in 1e-10, 1e-9, ..., 1e-6. Raises
    :class:`NumericalError` when all attempts fail.
    """
    M = symmetrize(np.asarray(M, dtype=float))
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        pass
    dim = M.shape[0]
    base = np.trace(M) / dim
    if not base > 0:
        raise NumericalError(f"{what} is not positive definite (trace {base * dim:g})")
    scale = JITTER_START
    eye = np.eye(dim)
    while scale <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(M + scale * base * eye)
        except np.linalg.LinAlgError:
            scale *= 10.0
    raise NumericalError(f"{what} is not positive definite after jitter up to {JITTER_MAX:g}")


def psd_factor(M, what="matrix"):
    """Like :func:`chol_jitter` but returns a zero factor for an all-zero matrix.

    Degenerate (zero) covariances appear in limiting cases such as a unit
    discount, where the backward-sampling variance vanishes.
    """
    M = np.asarray(M, dtype=float)
    if not np.any(M):
        return np.zeros_like(M)
    return chol_jitter(M, what)


def chol_solve(L, b):
    """Solve ``(L L') x = b`` given the lower factor ``L``."""
    from scipy.linalg import solve_triangular

    w = solve_triangular(L, b, lower=True)
    return solve_triangular(L.T, w, lower=False)


def spd_inverse(M, what="matrix"):
    L = chol_jitter(M, what)
    return chol_solve(L, np.eye(M.shape[0]))


def logdet_from_chol(L):
    return 2.0 * np.sum(np.log(np.diag(L)))


def min_eig(M):
    return float(np.linalg.eigvalsh(symmetrize(M))[0])
