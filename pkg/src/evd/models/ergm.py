"""Exponential random graph models on undirected simple graphs.

Statistics are the edge count and, optionally, the two-star count
``sum_k C(deg_k, 2)``.  Graphs are ``(N, N)`` int8 adjacency matrices.
"""

from __future__ import annotations

import itertools

import numpy as np
from numba import njit

from evd.models.base import UnnormalisedModel
from evd.models.ising import UnsupportedSizeError

MAX_ENUMERATION_NODES = 6
STATISTICS = ("edges", "twostars")


def ergm_stats(g, statistics=STATISTICS):
    g = np.asarray(g).astype(np.int64)
    deg = g.sum(axis=-1)
    out = []
    for name in statistics:
        if name == "edges":
            out.append(deg.sum(axis=-1) // 2)
        elif name == "twostars":
            out.append((deg * (deg - 1) // 2).sum(axis=-1))
        else:
            raise ValueError(f"unknown ERGM statistic {name!r}")
    return np.stack(out, axis=-1).astype(float)


@njit(cache=True)
def _dyad_sweeps(graphs, theta, sweeps, seed):
    np.random.seed(seed)
    n_chains, n, _ = graphs.shape
    use_star = theta.shape[1] > 1
    for c in range(n_chains):
        deg = np.zeros(n, dtype=np.int64)
        for i in range(n):
            for j in range(n):
                deg[i] += graphs[c, i, j]
        for _ in range(sweeps):
            for i in range(n - 1):
                for j in range(i + 1, n):
                    cur = graphs[c, i, j]
                    h = theta[c, 0]
                    if use_star:
                        # change in two-stars when the dyad is switched on
                        h += theta[c, 1] * (deg[i] - cur + deg[j] - cur)
                    new = 1 if np.random.random() < 1.0 / (1.0 + np.exp(-h)) else 0
                    if new != cur:
                        graphs[c, i, j] = new
                        graphs[c, j, i] = new
                        deg[i] += new - cur
                        deg[j] += new - cur
    return graphs


def all_graphs(n_nodes):
    if n_nodes > MAX_ENUMERATION_NODES:
        raise UnsupportedSizeError(f"enumeration supports at most {MAX_ENUMERATION_NODES} nodes")
    iu = np.triu_indices(n_nodes, 1)
    bits = np.array(list(itertools.product((0, 1), repeat=len(iu[0]))), dtype=np.int8)
    g = np.zeros((len(bits), n_nodes, n_nodes), dtype=np.int8)
    g[:, iu[0], iu[1]] = bits
    return g + np.swapaxes(g, -1, -2)


class ErgmModel(UnnormalisedModel):
    """Edges (and optionally two-stars) ERGM with an independent ``N(0, prior_var)`` prior.

    ``summary_statistics`` sets what ``summary`` reports (default: the model's
    own statistics); likelihood-free Bayes factors need both models to share it.
    """

    def __init__(self, n_nodes, statistics=STATISTICS, prior_var=25.0, summary_statistics=None):
        self.n_nodes = int(n_nodes)
        self.statistics = tuple(statistics)
        if self.statistics not in (("edges",), ("edges", "twostars")):
            raise ValueError("statistics must be ('edges',) or ('edges', 'twostars')")
        self.dim = self.n_stats = len(self.statistics)
        self.prior_var = float(prior_var)
        self.summary_statistics = tuple(summary_statistics or self.statistics)
        self.n_dyads = self.n_nodes * (self.n_nodes - 1) // 2
        self.name = "ergm-" + "-".join(self.statistics)
        self.exact_simulation = self.statistics == ("edges",)
        self.has_exact_log_z = self.exact_simulation or self.n_nodes <= MAX_ENUMERATION_NODES
        self._enum = None

    def cache_key(self):
        return (self.name, self.n_nodes, self.prior_var)

    def natural(self, theta):
        return np.asarray(theta, dtype=float)[..., : self.dim]

    def log_prior(self, theta):
        theta = self.natural(theta)
        return -0.5 * (theta**2).sum(axis=-1) / self.prior_var - 0.5 * self.dim * np.log(2 * np.pi * self.prior_var)

    def sample_prior(self, rng, size):
        return rng.normal(0.0, np.sqrt(self.prior_var), size=(size, self.dim))

    def n_units(self, y):
        return self.n_dyads

    def stats(self, y, n_units=None):
        if n_units is not None and n_units != self.n_dyads:
            raise ValueError("ERGM data cannot be tempered by data point")
        return ergm_stats(y, self.statistics)

    def summary(self, y):
        return ergm_stats(y, self.summary_statistics)

    def random_graphs(self, rng, size, p=0.5):
        iu = np.triu_indices(self.n_nodes, 1)
        g = np.zeros((size, self.n_nodes, self.n_nodes), dtype=np.int8)
        g[:, iu[0], iu[1]] = rng.random((size, len(iu[0]))) < p
        return g + np.swapaxes(g, -1, -2)

    def sweep_natural(self, state, eta, rng, n_units=None, sweeps=1):
        state = np.array(state, dtype=np.int8, copy=True)
        if sweeps > 0:
            eta = np.ascontiguousarray(np.atleast_2d(eta), dtype=float)
            _dyad_sweeps(state, eta, int(sweeps), int(rng.integers(0, 2**32 - 1)))
        return state

    def simulate_natural(self, eta, sim, rng, n_units=None):
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        if self.exact_simulation:
            p = 1.0 / (1.0 + np.exp(-eta[:, 0]))
            iu = np.triu_indices(self.n_nodes, 1)
            g = np.zeros((len(eta), self.n_nodes, self.n_nodes), dtype=np.int8)
            g[:, iu[0], iu[1]] = rng.random((len(eta), len(iu[0]))) < p[:, None]
            return g + np.swapaxes(g, -1, -2)
        if sim is not None and sim.mode == "exact":
            return self._exact_sample(eta, rng)
        state = self.random_graphs(rng, len(eta))
        return self.sweep_natural(state, eta, rng, None, 0 if sim is None else sim.burn_in)

    def _enumeration(self):
        if self._enum is None:
            g = all_graphs(self.n_nodes)
            self._enum = (g, self.stats(g))
        return self._enum

    def enumerate_data(self, n_units=None):
        return self._enumeration()[0]

    def _distinct_stats(self):
        # Z only depends on how many graphs share each statistic value
        if getattr(self, "_distinct", None) is None:
            s, counts = np.unique(self._enumeration()[1], axis=0, return_counts=True)
            self._distinct = (s, np.log(counts))
        return self._distinct

    def _exact_sample(self, eta, rng):
        graphs, s = self._enumeration()
        logits = eta @ s.T
        logits -= logits.max(axis=1, keepdims=True)
        cdf = np.cumsum(np.exp(logits), axis=1)
        u = rng.random(len(cdf)) * cdf[:, -1]
        idx = np.minimum((cdf < u[:, None]).sum(axis=1), len(graphs) - 1)
        return graphs[idx]

    def exact_log_z(self, theta, n_units=None):
        theta = np.asarray(theta, dtype=float)
        eta = self.natural(np.atleast_2d(theta))
        if self.exact_simulation:
            out = self.n_dyads * np.logaddexp(0.0, eta[:, 0])
        else:
            s, log_count = self._distinct_stats()
            logits = eta @ s.T + log_count
            m = logits.max(axis=1)
            out = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
        return out if theta.ndim > 1 else float(out[0])

    def base_natural(self):
        return np.zeros(self.dim)

    def base_log_z(self, n_units=None):
        return self.n_dyads * np.log(2.0)
