"""Poisson and geometric models for i.i.d. counts, with conjugate oracles.

Both are written as gamma / Z even though Z is known, so that the
random-weight estimators can be checked against closed-form evidences:

    Poisson:   gamma = prod lambda^y_i / y_i!,   Z = exp(n lambda),  lambda ~ Exp(1)
    Geometric: gamma = prod (1 - p)^y_i,         Z = p^-n,           p ~ Unif(0, 1)
"""

from __future__ import annotations

import numpy as np
from scipy.special import betaln, expit, gammaln

from evd.models.base import UnnormalisedModel


def _check_counts(y):
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("empty data set")
    if np.any(y < 0):
        raise ValueError("counts must be nonnegative")
    return y


def poisson_log_evidence(y):
    """log p(y) for i.i.d. Poisson(lambda) counts with lambda ~ Exp(1)."""
    y = _check_counts(y)
    n, s = y.size, y.sum()
    return float(gammaln(s + 1) - (s + 1) * np.log(n + 1) - gammaln(y + 1).sum())


def geometric_log_evidence(y):
    """log p(y) for i.i.d. Geometric(p) counts (failures before success), p ~ Unif(0, 1)."""
    y = _check_counts(y)
    return float(betaln(y.size + 1, y.sum() + 1))


def toy_log_bayes_factor(y):
    """Exact log BF of the Poisson model against the geometric model."""
    return poisson_log_evidence(y) - geometric_log_evidence(y)


def toy_summary(y):
    """Concatenated sufficient statistics ``(sum y, sum log y!)``.

    ``sum y`` is sufficient for each model's parameter; adding ``sum log y!``
    makes the conditional law of ``y`` given the summary identical under both
    models, so summary-based Bayes factors equal data-based ones.
    """
    y = np.asarray(y)
    return np.stack([y.sum(axis=-1), gammaln(y + 1).sum(axis=-1)], axis=-1).astype(float)


class _CountModel(UnnormalisedModel):
    dim = 1
    n_stats = 1
    exact_simulation = True
    iid_units = True

    def __init__(self, n):
        self.n = int(n)

    def n_units(self, y):
        return np.shape(y)[-1]

    def _n(self, n_units):
        return self.n if n_units is None else n_units

    def _prefix(self, y, n_units):
        y = np.asarray(y)
        return y if n_units is None else y[..., :n_units]

    def stats(self, y, n_units=None):
        return self._prefix(y, n_units).sum(axis=-1, keepdims=True).astype(float)

    def summary(self, y):
        return toy_summary(y)

    def sweep_natural(self, state, eta, rng, n_units, sweeps=1):
        # each site's full conditional is its marginal: a sweep is a fresh draw
        return self.simulate_natural(eta, None, rng, n_units)

    def block(self, u, n_prev, n_new):
        return u[..., n_prev:n_new]

    def join(self, v, w, n_prev, n_new):
        return np.concatenate([v[..., :n_prev], w], axis=-1)

    def cache_key(self):
        return (self.name, self.n)


class PoissonModel(_CountModel):
    name = "poisson"
    has_exact_log_z = True

    def natural(self, theta):
        lam = np.asarray(theta, dtype=float)[..., :1]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(lam > 0, np.log(np.where(lam > 0, lam, 1.0)), -np.inf)

    def log_prior(self, theta):
        lam = np.asarray(theta, dtype=float)[..., 0]
        return np.where(lam > 0, -lam, -np.inf)

    def sample_prior(self, rng, size):
        return rng.exponential(1.0, size=(size, 1))

    def log_base(self, y, n_units=None):
        return -gammaln(self._prefix(y, n_units) + 1).sum(axis=-1)

    def simulate_natural(self, eta, sim, rng, n_units):
        rate = np.exp(np.asarray(eta, dtype=float)[..., :1])
        return rng.poisson(rate, size=(rate.shape[0], self._n(n_units)))

    def sample_stats_natural(self, eta, sim, rng, n_units):
        rate = np.exp(np.asarray(eta, dtype=float)[..., :1])
        return rng.poisson(self._n(n_units) * rate).astype(float)

    def exact_log_z(self, theta, n_units=None):
        return self._n(n_units) * np.asarray(theta, dtype=float)[..., 0]

    def log_evidence(self, y):
        return poisson_log_evidence(y)

    def posterior_moments(self, y):
        """Mean and variance of the Gamma(sum y + 1, n + 1) posterior."""
        y = np.asarray(y)
        shape, rate = y.sum() + 1.0, y.size + 1.0
        return shape / rate, shape / rate**2


class GeometricModel(_CountModel):
    name = "geometric"
    has_exact_log_z = True

    def natural(self, theta):
        p = np.asarray(theta, dtype=float)[..., :1]
        ok = (p > 0) & (p < 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(ok, np.log1p(-np.where(ok, p, 0.5)), -np.inf)

    def log_prior(self, theta):
        p = np.asarray(theta, dtype=float)[..., 0]
        return np.where((p > 0) & (p < 1), 0.0, -np.inf)

    def sample_prior(self, rng, size):
        return rng.uniform(0.0, 1.0, size=(size, 1))

    def simulate_natural(self, eta, sim, rng, n_units):
        p = -np.expm1(np.asarray(eta, dtype=float)[..., :1])
        return rng.geometric(p, size=(p.shape[0], self._n(n_units))) - 1

    def sample_stats_natural(self, eta, sim, rng, n_units):
        p = -np.expm1(np.asarray(eta, dtype=float)[..., :1])
        return rng.negative_binomial(self._n(n_units), p).astype(float)

    def exact_log_z(self, theta, n_units=None):
        return -self._n(n_units) * np.log(np.asarray(theta, dtype=float)[..., 0])

    def log_evidence(self, y):
        return geometric_log_evidence(y)

    def posterior_moments(self, y):
        """Mean and variance of the Beta(n + 1, sum y + 1) posterior."""
        y = np.asarray(y)
        a, b = y.size + 1.0, y.sum() + 1.0
        return a / (a + b), a * b / ((a + b) ** 2 * (a + b + 1))


def generate_toy_datasets(n_datasets, n, rng, n_bins=10, lo=0.01, hi=0.99, max_draws=10**7):
    """Data sets whose Poisson posterior probability roughly covers ``[lo, hi]``.

    Candidates come from the prior predictive of a randomly chosen model and
    are accepted into equal-width probability bins until every bin holds its
    share.  Returns a list of integer arrays of length ``n``.
    """
    models = (PoissonModel(n), GeometricModel(n))
    per_bin = np.full(n_bins, n_datasets // n_bins)
    per_bin[: n_datasets % n_bins] += 1
    edges = np.linspace(lo, hi, n_bins + 1)
    filled = [[] for _ in range(n_bins)]
    draws = 0
    while any(len(f) < k for f, k in zip(filled, per_bin)):
        if draws >= max_draws:
            raise RuntimeError("could not fill the posterior-probability bins")
        draws += 1
        model = models[rng.integers(2)]
        theta = model.sample_prior(rng, 1)
        y = model.simulate(theta, None, rng, n)[0]
        prob = expit(toy_log_bayes_factor(y))
        if not lo <= prob <= hi:
            continue
        b = min(np.searchsorted(edges, prob, side="right") - 1, n_bins - 1)
        if len(filled[b]) < per_bin[b]:
            filled[b].append(y)
    out = [y for f in filled for y in f]
    order = rng.permutation(len(out))
    return [out[i] for i in order]
