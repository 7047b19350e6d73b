"""Zero-mean multivariate Gaussian with unknown precision and a Wishart prior.

The parameter vector holds the lower-triangular Cholesky factor ``L`` of the
precision, ``Lambda = L L'``, in ``np.tril_indices`` order, with a strictly
positive diagonal.  The likelihood is split as

    gamma(y | L) = exp(-1/2 sum_i y_i' Lambda y_i),   Z(L) = |2 pi Sigma|^(n/2),

and ``Z`` is treated as unknown by the random-weight estimators even though
it is available here, so the exact values serve as oracles.
"""

from __future__ import annotations

import numpy as np
from scipy.special import multigammaln

from evd.models.base import BlockDensity, UnnormalisedModel

LOG_2PI = np.log(2.0 * np.pi)


def gaussian_precision_log_evidence(y, nu, V):
    """Closed-form log evidence of ``y`` (``n x d``) under ``Lambda ~ Wishart(nu, V)``."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    d = V.shape[0]
    sign, logdet_v = np.linalg.slogdet(V)
    if sign <= 0 or not np.isfinite(logdet_v):
        raise ValueError("V must be symmetric positive definite")
    y = np.asarray(y, dtype=float).reshape(-1, d)
    n = y.shape[0]
    if n == 0:
        return 0.0
    post_inv = np.linalg.inv(V) + y.T @ y
    _, logdet_post_inv = np.linalg.slogdet(post_inv)
    return float(
        -0.5 * n * d * np.log(np.pi)
        + multigammaln(0.5 * (nu + n), d)
        - multigammaln(0.5 * nu, d)
        - 0.5 * (nu + n) * logdet_post_inv
        - 0.5 * nu * logdet_v
    )


def _bartlett(rng, nu, chol_v, size):
    """Cholesky factors of ``size`` Wishart(nu, V) draws, ``V = chol_v chol_v'``."""
    d = chol_v.shape[0]
    a = np.zeros((size, d, d))
    rows, cols = np.tril_indices(d, -1)
    a[:, rows, cols] = rng.standard_normal((size, len(rows)))
    idx = np.arange(d)
    a[:, idx, idx] = np.sqrt(rng.chisquare(nu - idx, size=(size, d)))
    return chol_v @ a


class GaussianPrecisionModel(UnnormalisedModel):
    exact_simulation = True
    iid_units = True
    has_exact_log_z = True

    def __init__(self, d, n=None, nu=None, V=None):
        self.d = int(d)
        self.n = None if n is None else int(n)
        self.nu = float(10 + self.d if nu is None else nu)
        self.V = np.eye(self.d) if V is None else np.atleast_2d(np.asarray(V, dtype=float))
        if self.nu <= self.d - 1:
            raise ValueError("Wishart degrees of freedom must exceed d - 1")
        self.V_inv = np.linalg.inv(self.V)
        self.chol_v = np.linalg.cholesky(self.V)
        self.dim = self.d * (self.d + 1) // 2
        self.n_stats = self.d * self.d
        self.tril = np.tril_indices(self.d)
        self.diag_pos = np.flatnonzero(self.tril[0] == self.tril[1])
        # exponent of a_ii in the Jacobian of L -> L L'
        self._jac_power = self.d - np.arange(self.d)
        _, logdet_v = np.linalg.slogdet(self.V)
        self._log_norm = (
            -0.5 * self.nu * self.d * np.log(2.0) - 0.5 * self.nu * logdet_v - multigammaln(0.5 * self.nu, self.d)
        )
        self.name = f"precision-d{self.d}"

    def cache_key(self):
        return (self.name, self.nu, tuple(self.V.ravel()))

    # -- parameter maps -----------------------------------------------------

    def to_cholesky(self, theta):
        theta = np.asarray(theta, dtype=float)
        L = np.zeros(theta.shape[:-1] + (self.d, self.d))
        L[..., self.tril[0], self.tril[1]] = theta
        return L

    def from_cholesky(self, L):
        return np.asarray(L)[..., self.tril[0], self.tril[1]]

    def precision(self, theta):
        L = self.to_cholesky(theta)
        return L @ np.swapaxes(L, -1, -2)

    def natural(self, theta):
        lam = self.precision(theta)
        return lam.reshape(lam.shape[:-2] + (self.n_stats,))

    def log_det_precision(self, theta):
        diag = np.asarray(theta, dtype=float)[..., self.diag_pos]
        with np.errstate(divide="ignore", invalid="ignore"):
            return 2.0 * np.log(diag).sum(axis=-1)

    def log_prior(self, theta):
        theta = np.asarray(theta, dtype=float)
        diag = theta[..., self.diag_pos]
        ok = np.all(diag > 0, axis=-1)
        safe = np.where(ok[..., None], diag, 1.0)
        lam = self.precision(np.where(ok[..., None], theta, 0.0))
        logdet = 2.0 * np.log(safe).sum(axis=-1)
        trace = np.einsum("ij,...ji->...", self.V_inv, lam)
        log_jac = self.d * np.log(2.0) + (self._jac_power * np.log(safe)).sum(axis=-1)
        lp = self._log_norm + 0.5 * (self.nu - self.d - 1) * logdet - 0.5 * trace + log_jac
        return np.where(ok, lp, -np.inf)

    def sample_prior(self, rng, size):
        return self.from_cholesky(_bartlett(rng, self.nu, self.chol_v, size))

    # -- data ---------------------------------------------------------------

    def n_units(self, y):
        return np.shape(y)[-2]

    def stats(self, y, n_units=None):
        y = np.asarray(y, dtype=float)
        if n_units is not None:
            y = y[..., :n_units, :]
        scatter = np.swapaxes(y, -1, -2) @ y
        return -0.5 * scatter.reshape(scatter.shape[:-2] + (self.n_stats,))

    def _n(self, n_units):
        if n_units is None:
            if self.n is None:
                raise ValueError("number of observations not set")
            return self.n
        return n_units

    def simulate_natural(self, eta, sim, rng, n_units=None):
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        lam = eta.reshape(-1, self.d, self.d)
        return self._draw(np.linalg.cholesky(lam), rng, n_units)

    def simulate(self, theta, sim, rng, n_units=None):
        return self._draw(self.to_cholesky(np.atleast_2d(theta)), rng, n_units)

    def _draw(self, L, rng, n_units, M=None):
        # rows y' = z' L^{-1} have covariance (L L')^{-1}
        shape = (L.shape[0], self._n(n_units), self.d) if M is None else (L.shape[0], M, self._n(n_units), self.d)
        z = rng.standard_normal(shape)
        inv = np.linalg.inv(L)
        return z @ (inv if M is None else inv[:, None])

    def simulate_repeated(self, theta, M, sim, rng, n_units=None):
        return self._draw(self.to_cholesky(np.atleast_2d(theta)), rng, n_units, M)

    def log_gamma(self, y, theta, n_units=None):
        # -1/2 sum_i |L' y_i|^2, broadcasting y (..., n, d) against theta (..., dim)
        y = np.asarray(y, dtype=float)
        if n_units is not None:
            y = y[..., :n_units, :]
        v = y @ self.to_cholesky(theta)
        return -0.5 * (v**2).sum(axis=(-1, -2))

    def sweep_natural(self, state, eta, rng, n_units, sweeps=1):
        return self.simulate_natural(eta, None, rng, n_units)

    def block(self, u, n_prev, n_new):
        return u[..., n_prev:n_new, :]

    def join(self, v, w, n_prev, n_new):
        return np.concatenate([v[..., :n_prev, :], w], axis=-2)

    # -- normalising constants ----------------------------------------------

    def exact_log_z(self, theta, n_units=None):
        return 0.5 * self._n(n_units) * (self.d * LOG_2PI - self.log_det_precision(theta))

    def log_likelihood(self, y, theta, n_units=None):
        n = self.n_units(y) if n_units is None else n_units
        return self.log_gamma(y, theta, n) - self.exact_log_z(theta, n)

    def log_evidence(self, y, n_units=None):
        y = np.asarray(y, dtype=float)
        if n_units is not None:
            y = y[:n_units]
        return gaussian_precision_log_evidence(y, self.nu, self.V)

    # -- conjugacy ----------------------------------------------------------

    def posterior_parameters(self, y, n_units=None):
        """Wishart posterior ``(nu_n, V_n)`` given the first ``n_units`` observations."""
        y = np.asarray(y, dtype=float).reshape(-1, self.d)
        if n_units is not None:
            y = y[:n_units]
        return self.nu + len(y), np.linalg.inv(self.V_inv + y.T @ y)

    def sample_posterior(self, y, rng, size, n_units=None):
        nu_n, v_n = self.posterior_parameters(y, n_units)
        return self.from_cholesky(_bartlett(rng, nu_n, np.linalg.cholesky(v_n), size))

    def mle_precision(self, y):
        y = np.asarray(y, dtype=float).reshape(-1, self.d)
        return np.linalg.inv(y.T @ y / len(y))


class GaussianBlock(BlockDensity):
    """``N(0, cov)`` independently on each of ``size`` observations of a block."""

    def __init__(self, cov, size=1):
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.size = int(size)
        self.d = self.cov.shape[0]
        self._chol = np.linalg.cholesky(self.cov)
        self._whiten = np.linalg.inv(self._chol).T
        self._log_norm = -0.5 * self.d * LOG_2PI - np.log(np.diag(self._chol)).sum()

    @classmethod
    def from_precision(cls, precision, size=1):
        return cls(np.linalg.inv(precision), size)

    def logpdf(self, w):
        z = np.asarray(w, dtype=float) @ self._whiten
        return (self._log_norm - 0.5 * (z**2).sum(axis=-1)).sum(axis=-1)

    def sample(self, rng, size):
        shape = (*np.atleast_1d(size), self.size, self.d)
        return rng.standard_normal(shape) @ self._chol.T
