"""Common interface for models with an unnormalised likelihood.

Every model here is an exponential family on its data space,

    gamma(y | theta) = exp(eta(theta) . S(y) + log h(y)),   f = gamma / Z(theta),

which is all the estimators need: a geometric bridge between two members of
the family is another member, with natural parameter on the straight line
between the endpoints.

Batches follow one convention throughout: parameters are ``(C, dim)`` arrays,
natural parameters ``(C, k)``, and a batch of data sets has a leading axis of
length ``C``.  ``n_units`` selects a prefix of the data (data-point
tempering); ``None`` means the full data set.
"""

from __future__ import annotations

import numpy as np

from evd.core import SimConfig


class UnnormalisedModel:
    """Base class; subclasses fill in the model-specific pieces."""

    name = "model"
    dim = 1
    n_stats = 1
    #: every simulated data set is an exact draw (i.i.d. models)
    exact_simulation = False
    #: data units are i.i.d. given theta, so a tempering increment depends only on the new block
    iid_units = False

    # -- parameters ---------------------------------------------------------

    def natural(self, theta):
        raise NotImplementedError

    def log_prior(self, theta):
        raise NotImplementedError

    def sample_prior(self, rng, size):
        raise NotImplementedError

    def in_support(self, theta):
        return np.isfinite(self.log_prior(theta))

    # -- data ---------------------------------------------------------------

    def n_units(self, y):
        """Number of data units (tempering granularity) in a single data set."""
        raise NotImplementedError

    def stats(self, y, n_units=None):
        raise NotImplementedError

    def log_base(self, y, n_units=None):
        return np.zeros(np.shape(self.stats(y, n_units))[:-1])

    def log_gamma_natural(self, y, eta, n_units=None):
        eta = np.asarray(eta, dtype=float)
        return np.sum(eta * self.stats(y, n_units), axis=-1) + self.log_base(y, n_units)

    def log_gamma(self, y, theta, n_units=None):
        """log gamma(y | theta) on the first ``n_units`` data units."""
        return self.log_gamma_natural(y, self.natural(theta), n_units)

    def summary(self, y):
        return self.stats(y)

    # -- simulation ---------------------------------------------------------

    def simulate_natural(self, eta, sim: SimConfig, rng, n_units):
        """One data set of ``n_units`` units per row of ``eta``."""
        raise NotImplementedError

    def sweep_natural(self, state, eta, rng, n_units, sweeps=1):
        """``sweeps`` raster-order Gibbs sweeps of ``state`` (modified copy)."""
        raise NotImplementedError

    def simulate(self, theta, sim: SimConfig, rng, n_units):
        return self.simulate_natural(self.natural(np.atleast_2d(theta)), sim, rng, n_units)

    def enumerate_data(self, n_units=None):
        """Every data set on the first ``n_units`` units (finite, small spaces only)."""
        raise NotImplementedError(f"{self.name} has no enumerable data space")

    def simulate_repeated(self, theta, M, sim, rng, n_units):
        """``M`` draws per parameter row, shaped ``(C, M, ...)``."""
        theta = np.atleast_2d(theta)
        u = self.simulate(np.repeat(theta, M, axis=0), sim, rng, n_units)
        return u.reshape(len(theta), M, *u.shape[1:])

    def sample_stats_natural(self, eta, sim, rng, n_units):
        """Sufficient statistics of fresh draws; subclasses may shortcut."""
        return self.stats(self.simulate_natural(eta, sim, rng, n_units), n_units)

    # -- data-point tempering -----------------------------------------------

    def block(self, u, n_prev, n_new):
        """The units ``n_prev..n_new-1`` of a batch of data sets."""
        raise NotImplementedError

    def join(self, v, w, n_prev, n_new):
        """Data sets on ``n_new`` units built from a prefix ``v`` and block ``w``."""
        raise NotImplementedError

    # -- normalising constants ----------------------------------------------

    has_exact_log_z = False

    def exact_log_z(self, theta, n_units=None):
        raise NotImplementedError(f"{self.name} has no exact normalising constant")

    def base_natural(self):
        """Natural parameter of an exactly simulable member with known Z."""
        raise NotImplementedError

    def base_log_z(self, n_units):
        raise NotImplementedError

    def cache_key(self):
        return (self.name,)


class BlockDensity:
    """A normalised density on one tempering block (``q_w``)."""

    def logpdf(self, w):
        raise NotImplementedError

    def sample(self, rng, size):
        raise NotImplementedError
