"""Agent forecast densities: normal, multivariate Student-T, or a sample."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from ._linalg import chol_jitter, logdet_from_chol, symmetrize

__all__ = ["Normal", "StudentT", "Empirical", "mvn_logpdf", "mvt_logpdf", "fit_student_t"]

LOG_2PI = np.log(2.0 * np.pi)


def mvn_logpdf(x, mean, cov):
    """Multivariate normal log density; ``x`` may carry leading batch axes."""
    L = chol_jitter(cov, "normal covariance")
    d = np.asarray(x, dtype=float) - mean
    sol = np.linalg.solve(L, d.reshape(-1, d.shape[-1]).T).T
    maha = np.sum(sol**2, axis=-1).reshape(d.shape[:-1])
    return -0.5 * (mean.shape[0] * LOG_2PI + logdet_from_chol(L) + maha)


def mvt_logpdf(x, dof, loc, scale):
    L = chol_jitter(scale, "Student-T scale")
    q = loc.shape[0]
    d = np.asarray(x, dtype=float) - loc
    sol = np.linalg.solve(L, d.reshape(-1, q).T).T
    maha = np.sum(sol**2, axis=-1).reshape(d.shape[:-1])
    return (gammaln(0.5 * (dof + q)) - gammaln(0.5 * dof)
            - 0.5 * q * np.log(dof * np.pi) - 0.5 * logdet_from_chol(L)
            - 0.5 * (dof + q) * np.log1p(maha / dof))


def _as_vec(v):
    return np.atleast_1d(np.asarray(v, dtype=float))


def _as_mat(m):
    return symmetrize(np.atleast_2d(np.asarray(m, dtype=float)))


@dataclass(frozen=True, eq=False)
class Normal:
    mean: np.ndarray
    cov: np.ndarray
    kind = "normal"

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_vec(self.mean))
        object.__setattr__(self, "cov", _as_mat(self.cov))
        if self.cov.shape != (self.dim, self.dim):
            raise ValueError("covariance shape does not match mean")

    @property
    def dim(self):
        return self.mean.shape[0]

    def moments(self):
        return self.mean, self.cov

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        z = rng.standard_normal((n, self.dim))
        x = self.mean + z @ chol_jitter(self.cov).T
        return x[0] if size is None else x

    def logpdf(self, x):
        return mvn_logpdf(x, self.mean, self.cov)


@dataclass(frozen=True, eq=False)
class StudentT:
    """``x = loc + scale^{1/2} z / sqrt(phi)``, ``phi ~ Gamma(dof/2, rate dof/2)``."""

    dof: float
    loc: np.ndarray
    scale: np.ndarray
    kind = "student_t"

    def __post_init__(self):
        object.__setattr__(self, "dof", float(self.dof))
        object.__setattr__(self, "loc", _as_vec(self.loc))
        object.__setattr__(self, "scale", _as_mat(self.scale))
        if not self.dof > 0:
            raise ValueError(f"Student-T dof must be positive, got {self.dof}")
        if self.scale.shape != (self.dim, self.dim):
            raise ValueError("scale shape does not match location")

    @property
    def dim(self):
        return self.loc.shape[0]

    def moments(self):
        if self.dof <= 2:
            raise ValueError("Student-T covariance undefined for dof <= 2")
        return self.loc, self.scale * self.dof / (self.dof - 2.0)

    def sample(self, rng, size=None, return_phi=False):
        n = 1 if size is None else size
        phi = rng.gamma(0.5 * self.dof, 2.0 / self.dof, size=n)
        z = rng.standard_normal((n, self.dim))
        x = self.loc + (z @ chol_jitter(self.scale).T) / np.sqrt(phi)[:, None]
        if size is None:
            x, phi = x[0], phi[0]
        return (x, phi) if return_phi else x

    def logpdf(self, x):
        return mvt_logpdf(x, self.dof, self.loc, self.scale)


@dataclass(frozen=True, eq=False)
class Empirical:
    """Forecast density known only through ``draws`` (I x q).

    ``logpdf`` defaults to a normal fitted to the draws by moments.
    """

    draws: np.ndarray
    logpdf_fn: Optional[Callable] = field(default=None, repr=False)
    kind = "empirical"

    def __post_init__(self):
        d = np.asarray(self.draws, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if d.shape[0] < 1:
            raise ValueError("empirical density needs at least one draw")
        object.__setattr__(self, "draws", d)

    @property
    def dim(self):
        return self.draws.shape[1]

    @property
    def n_draws(self):
        return self.draws.shape[0]

    def moments(self):
        mean = self.draws.mean(axis=0)
        if self.n_draws < 2:
            return mean, np.zeros((self.dim, self.dim))
        return mean, np.atleast_2d(np.cov(self.draws, rowvar=False))

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        x = self.draws[rng.integers(self.n_draws, size=n)]
        return x[0] if size is None else x

    def logpdf(self, x):
        if self.logpdf_fn is not None:
            return self.logpdf_fn(x)
        mean, cov = self.moments()
        return mvn_logpdf(x, mean, cov)


def fit_student_t(draws, dof):
    """Student-T with the draws' mean and covariance at a fixed ``dof > 2``."""
    emp = Empirical(draws)
    mean, cov = emp.moments()
    return StudentT(dof, mean, cov * (dof - 2.0) / dof)
