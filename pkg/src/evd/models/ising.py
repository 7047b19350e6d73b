"""Ising models on a rectangular lattice with free boundaries.

Spins are coded -1/+1.  The first-order statistic is the sum of products over
horizontal and vertical neighbour pairs; the second-order model adds the sum
over both diagonal neighbour pairs.  Sites are ordered in raster order, and a
data prefix of ``n`` units keeps the first ``n`` sites; absent sites are
stored as 0 so they drop out of every neighbour sum.
"""

from __future__ import annotations

import itertools

import numpy as np
from numba import njit

from evd.core import log_sum_exp
from evd.models.base import BlockDensity, UnnormalisedModel

MAX_TRANSFER_COLS = 20
MAX_ENUMERATION_SITES = 16


class UnsupportedSizeError(ValueError):
    pass


@njit(cache=True)
def _gibbs_sweeps(spins, theta, n_active, sweeps, seed):
    np.random.seed(seed)
    n_chains, rows, cols = spins.shape
    for c in range(n_chains):
        t1 = theta[c, 0]
        t2 = theta[c, 1]
        for _ in range(sweeps):
            for s in range(n_active):
                i = s // cols
                j = s % cols
                nn = 0
                if i > 0:
                    nn += spins[c, i - 1, j]
                if i < rows - 1:
                    nn += spins[c, i + 1, j]
                if j > 0:
                    nn += spins[c, i, j - 1]
                if j < cols - 1:
                    nn += spins[c, i, j + 1]
                h = t1 * nn
                if t2 != 0.0:
                    dd = 0
                    if i > 0 and j > 0:
                        dd += spins[c, i - 1, j - 1]
                    if i > 0 and j < cols - 1:
                        dd += spins[c, i - 1, j + 1]
                    if i < rows - 1 and j > 0:
                        dd += spins[c, i + 1, j - 1]
                    if i < rows - 1 and j < cols - 1:
                        dd += spins[c, i + 1, j + 1]
                    h += t2 * dd
                p_up = 1.0 / (1.0 + np.exp(-2.0 * h))
                spins[c, i, j] = 1 if np.random.random() < p_up else -1
    return spins


def ising_stats(y, order="first", n_units=None):
    """Sufficient statistics ``(S1,)`` or ``(S1, S2)`` of lattice configurations."""
    y = np.asarray(y)
    if n_units is not None:
        y = _mask_prefix(y, n_units)
    y = y.astype(np.int32)
    s1 = (y[..., :, :-1] * y[..., :, 1:]).sum(axis=(-1, -2)) + (y[..., :-1, :] * y[..., 1:, :]).sum(
        axis=(-1, -2)
    )
    if order == "first":
        return s1[..., None].astype(float)
    s2 = (y[..., :-1, :-1] * y[..., 1:, 1:]).sum(axis=(-1, -2)) + (y[..., :-1, 1:] * y[..., 1:, :-1]).sum(
        axis=(-1, -2)
    )
    return np.stack([s1, s2], axis=-1).astype(float)


def _mask_prefix(y, n_units):
    rows, cols = y.shape[-2:]
    if n_units >= rows * cols:
        return y
    mask = (np.arange(rows * cols) < n_units).reshape(rows, cols)
    return np.where(mask, y, 0).astype(y.dtype)


def ising_exact_log_z(theta, rows, cols, order="first", n_units=None, chunk=256):
    """Exact log partition function by a site-by-site transfer recursion.

    The recursion carries log-weights over the last ``cols + 1`` spins in
    raster order, so the cost is ``O(rows * cols * 2**cols)`` per parameter.
    ``theta`` may be a single parameter or a ``(B, dim)`` batch.
    """
    if cols > MAX_TRANSFER_COLS:
        raise UnsupportedSizeError(f"transfer recursion supports at most {MAX_TRANSFER_COLS} columns")
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim <= 1
    theta = np.atleast_2d(theta)
    t1 = theta[:, 0]
    t2 = theta[:, 1] if (order == "second" and theta.shape[1] > 1) else np.zeros(len(theta))
    n_sites = rows * cols if n_units is None else int(n_units)
    out = np.concatenate(
        [_transfer(t1[k : k + chunk], t2[k : k + chunk], rows, cols, n_sites) for k in range(0, len(t1), chunk)]
    )
    return float(out[0]) if scalar else out


def _transfer(t1, t2, rows, cols, n_sites):
    width = cols + 1
    half = 1 << (width - 1)
    rest = np.arange(half)

    def spin(bit):
        return 2.0 * ((rest >> bit) & 1) - 1.0 if bit >= 0 else np.zeros(half)

    left, up, upright = spin(0), spin(cols - 1), spin(cols - 2)
    b = len(t1)
    phi = np.full((b, 2 * half), -np.inf)
    phi[:, 0] = 0.0
    t1c, t2c = t1[:, None, None], t2[:, None, None]
    top = np.array([-1.0, 1.0])[None, :, None]
    for s in range(n_sites):
        i, j = divmod(s, cols)
        f1 = np.zeros(half)
        if j > 0:
            f1 = f1 + left
        if i > 0:
            f1 = f1 + up
        f2 = np.zeros((2, half))
        if i > 0 and j > 0:
            f2 = f2 + top[0]
        if i > 0 and j < cols - 1:
            f2 = f2 + upright
        field = t1c * f1[None, None, :] + t2c * f2[None, :, :]
        phi3 = phi.reshape(b, 2, half)
        down = np.logaddexp(phi3[:, 0] - field[:, 0], phi3[:, 1] - field[:, 1])
        upv = np.logaddexp(phi3[:, 0] + field[:, 0], phi3[:, 1] + field[:, 1])
        phi = np.stack([down, upv], axis=-1).reshape(b, 2 * half)
    return log_sum_exp(phi, axis=1)


def all_configurations(rows, cols, n_units=None):
    """Every spin configuration on the first ``n_units`` sites (others 0)."""
    n = rows * cols if n_units is None else n_units
    if n > MAX_ENUMERATION_SITES:
        raise UnsupportedSizeError(f"enumeration supports at most {MAX_ENUMERATION_SITES} sites")
    flat = np.zeros((2**n, rows * cols), dtype=np.int8)
    flat[:, :n] = np.array(list(itertools.product((-1, 1), repeat=n)), dtype=np.int8).reshape(2**n, n)
    return flat.reshape(-1, rows, cols)


class IsingModel(UnnormalisedModel):
    """First- or second-order Ising model; prior uniform on a box.

    ``stat_scale`` multiplies the sufficient statistics (equivalently the
    parameter), for matching conventions in which the coupling is quoted on a
    different scale.
    """

    def __init__(self, rows, cols, order="first", prior_low=0.0, prior_high=2.0, stat_scale=1.0):
        if order not in ("first", "second"):
            raise ValueError("order must be 'first' or 'second'")
        self.rows, self.cols, self.order = int(rows), int(cols), order
        self.dim = self.n_stats = 1 if order == "first" else 2
        self.prior_low, self.prior_high = float(prior_low), float(prior_high)
        self.stat_scale = float(stat_scale)
        self.name = f"ising-{order}"
        self.has_exact_log_z = self.cols <= MAX_TRANSFER_COLS

    @property
    def n_sites(self):
        return self.rows * self.cols

    def cache_key(self):
        return (self.name, self.rows, self.cols, self.prior_low, self.prior_high, self.stat_scale)

    def natural(self, theta):
        return self.stat_scale * np.asarray(theta, dtype=float)[..., : self.dim]

    def log_prior(self, theta):
        theta = np.asarray(theta, dtype=float)[..., : self.dim]
        inside = np.all((theta >= self.prior_low) & (theta <= self.prior_high), axis=-1)
        return np.where(inside, -self.dim * np.log(self.prior_high - self.prior_low), -np.inf)

    def sample_prior(self, rng, size):
        return rng.uniform(self.prior_low, self.prior_high, size=(size, self.dim))

    def n_units(self, y):
        return self.n_sites

    def stats(self, y, n_units=None):
        return ising_stats(y, self.order, n_units)

    # -- simulation ---------------------------------------------------------

    def _theta2(self, eta):
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        out = np.zeros((eta.shape[0], 2))
        out[:, : eta.shape[1]] = eta
        return out

    def random_configurations(self, rng, size, n_units=None):
        n = self.n_sites if n_units is None else n_units
        flat = np.zeros((size, self.n_sites), dtype=np.int8)
        flat[:, :n] = 2 * rng.integers(0, 2, size=(size, n), dtype=np.int8) - 1
        return flat.reshape(size, self.rows, self.cols)

    def sweep_natural(self, state, eta, rng, n_units=None, sweeps=1):
        n = self.n_sites if n_units is None else n_units
        state = np.array(state, dtype=np.int8, copy=True)
        if sweeps > 0 and n > 0:
            seed = int(rng.integers(0, 2**32 - 1))
            _gibbs_sweeps(state, self._theta2(eta), n, int(sweeps), seed)
        return state

    def simulate_natural(self, eta, sim, rng, n_units=None):
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        if sim is not None and sim.mode == "exact":
            return self.exact_sample_natural(eta, rng, n_units)
        state = self.random_configurations(rng, eta.shape[0], n_units)
        burn = 0 if sim is None else sim.burn_in
        return self.sweep_natural(state, eta, rng, n_units, burn)

    def _enumeration(self, n_units=None):
        cache = self.__dict__.setdefault("_enum_cache", {})
        if n_units not in cache:
            configs = all_configurations(self.rows, self.cols, n_units)
            cache[n_units] = (configs, self.stats(configs))
        return cache[n_units]

    def enumerate_data(self, n_units=None):
        return self._enumeration(n_units)[0]

    def exact_sample_natural(self, eta, rng, n_units=None, chunk_cells=2**22):
        """Exact draws by enumeration (small lattices only)."""
        configs, s = self._enumeration(n_units)
        eta = np.atleast_2d(eta)
        out = np.empty((eta.shape[0], self.rows, self.cols), dtype=np.int8)
        step = max(1, chunk_cells // len(configs))
        for k in range(0, eta.shape[0], step):
            logits = eta[k : k + step] @ s.T
            logits -= logits.max(axis=1, keepdims=True)
            cdf = np.cumsum(np.exp(logits), axis=1)
            u = rng.random(len(cdf)) * cdf[:, -1]
            idx = np.minimum((cdf < u[:, None]).sum(axis=1), len(configs) - 1)
            out[k : k + step] = configs[idx]
        return out

    # -- tempering ----------------------------------------------------------

    def block(self, u, n_prev, n_new):
        flat = np.asarray(u).reshape(*np.shape(u)[:-2], -1)
        return flat[..., n_prev:n_new]

    def join(self, v, w, n_prev, n_new):
        flat = np.array(v, dtype=np.int8).reshape(*np.shape(v)[:-2], -1)
        flat[..., n_prev:] = 0
        flat[..., n_prev:n_new] = w
        return flat.reshape(*np.shape(v))

    # -- normalising constants ----------------------------------------------

    def exact_log_z(self, theta, n_units=None):
        theta = np.asarray(theta, dtype=float)
        eta = self.natural(np.atleast_2d(theta))
        out = ising_exact_log_z(eta, self.rows, self.cols, self.order, n_units)
        return out if theta.ndim > 1 else float(out[0])

    def base_natural(self):
        return np.zeros(self.dim)

    def base_log_z(self, n_units=None):
        n = self.n_sites if n_units is None else n_units
        return n * np.log(2.0)


class SpinBlockUniform(BlockDensity):
    """Independent fair spins on a block of sites (``Bern(0.5)`` per pixel)."""

    def __init__(self, size=1):
        self.size = int(size)

    def logpdf(self, w):
        w = np.asarray(w)
        return np.full(w.shape[:-1], -w.shape[-1] * np.log(2.0))

    def sample(self, rng, size):
        return (2 * rng.integers(0, 2, size=(*np.atleast_1d(size), self.size), dtype=np.int8) - 1).astype(np.int8)
