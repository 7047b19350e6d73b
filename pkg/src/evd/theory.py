"""Exact finite-state checks of the flow perturbation bounds, and the
mean-squared-error comparison of biased against unbiased importance weights.

A flow on ``n`` states evolves as ``eta_t = Psi_{G_{t-1}}(eta_{t-1}) M_t``,
with ``Psi_G(eta) = eta * G / eta(G)`` the Boltzmann-Gibbs reweighting.  The
perturbed flow uses ``G~`` in place of ``G``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class FiniteFlow:
    """``kernels[t-1]`` is ``M_t`` and ``potentials[t]`` is ``G_t``, for ``t = 1..T``
    and ``t = 0..T-1`` respectively."""

    eta0: np.ndarray
    kernels: np.ndarray
    potentials: np.ndarray
    approx_potentials: np.ndarray

    def __post_init__(self):
        self.eta0 = np.asarray(self.eta0, dtype=float)
        self.kernels = np.asarray(self.kernels, dtype=float)
        self.potentials = np.asarray(self.potentials, dtype=float)
        self.approx_potentials = np.asarray(self.approx_potentials, dtype=float)
        T, n = self.potentials.shape
        if self.kernels.shape != (T, n, n) or self.approx_potentials.shape != (T, n) or self.eta0.shape != (n,):
            raise ValueError("inconsistent flow dimensions")
        if not np.allclose(self.kernels.sum(axis=-1), 1.0, atol=1e-12) or np.any(self.kernels < 0):
            raise ValueError("kernels must be row-stochastic")
        if np.any(self.potentials <= 0) or np.any(self.approx_potentials <= 0):
            raise ValueError("potentials must be strictly positive")

    @property
    def n(self):
        return len(self.eta0)

    @property
    def T(self):
        return len(self.potentials)


def boltzmann_gibbs(eta, G):
    w = np.asarray(eta) * np.asarray(G)
    return w / w.sum()


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def flow_evolve(flow):
    """Exact flows ``(eta_0..eta_T, eta~_0..eta~_T)`` as ``(T+1, n)`` arrays."""
    exact = [flow.eta0]
    approx = [flow.eta0]
    for t in range(flow.T):
        exact.append(boltzmann_gibbs(exact[-1], flow.potentials[t]) @ flow.kernels[t])
        approx.append(boltzmann_gibbs(approx[-1], flow.approx_potentials[t]) @ flow.kernels[t])
    return np.array(exact), np.array(approx)


@dataclass
class MixingConstants:
    gamma_rel: float
    eps_m: float
    eps_g: float
    #: (t, x) attaining gamma_rel; (t, x, y, z) attaining eps_m; (t, x, y) attaining eps_g
    where_gamma: tuple
    where_m: tuple
    where_g: tuple


def mixing_constants(flow):
    rel = np.abs(flow.potentials - flow.approx_potentials) / flow.approx_potentials
    where_gamma = np.unravel_index(np.argmax(rel), rel.shape)

    # min over x of M(x, z) divided by max over y of M(y, z), per (t, z)
    lo = flow.kernels.min(axis=1)
    hi = flow.kernels.max(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio_m = np.where(hi > 0, lo / hi, 1.0)
    t_m, z = np.unravel_index(np.argmin(ratio_m), ratio_m.shape)
    where_m = (int(t_m), int(flow.kernels[t_m, :, z].argmin()), int(flow.kernels[t_m, :, z].argmax()), int(z))

    ratio_g = flow.potentials.min(axis=1) / flow.potentials.max(axis=1)
    t_g = int(np.argmin(ratio_g))
    where_g = (t_g, int(flow.potentials[t_g].argmin()), int(flow.potentials[t_g].argmax()))
    return MixingConstants(
        float(rel.max()),
        float(ratio_m.min()),
        float(ratio_g.min()),
        tuple(int(i) for i in where_gamma),
        where_m,
        where_g,
    )


def lemma1_check(eta, G, G_tilde):
    """``TV(Psi_G~(eta), Psi_G(eta))`` against ``2 gamma_rel``; returns ``(lhs, rhs, holds)``."""
    G = np.asarray(G, dtype=float)
    G_tilde = np.asarray(G_tilde, dtype=float)
    lhs = total_variation(boltzmann_gibbs(eta, G_tilde), boltzmann_gibbs(eta, G))
    rhs = 2.0 * float(np.max(np.abs(G - G_tilde) / G_tilde))
    return lhs, rhs, lhs <= rhs


def prop1_bound(gamma_rel, eps_m, eps_g):
    if eps_m <= 0:
        return float("inf")
    return 4.0 * gamma_rel * (1.0 - eps_m) / (eps_m**3 * eps_g)


@dataclass
class Prop1Result:
    sup_tv: float
    bound: float
    constants: MixingConstants

    @property
    def holds(self):
        return self.sup_tv <= self.bound

    @property
    def vacuous(self):
        return not np.isfinite(self.bound)

    @property
    def margin(self):
        return self.bound - self.sup_tv


def prop1_check(flow):
    exact, approx = flow_evolve(flow)
    sup_tv = max(total_variation(p, q) for p, q in zip(exact, approx))
    c = mixing_constants(flow)
    return Prop1Result(sup_tv, prop1_bound(c.gamma_rel, c.eps_m, c.eps_g), c)


def random_flow(rng, n=6, T=40, alpha=0.6, gamma_rel=0.05, log_g_band=1.0):
    """A random flow satisfying the bound's assumptions by construction.

    Kernel rows are mixtures ``alpha * uniform + (1 - alpha) * Dirichlet``,
    potentials are log-uniform on ``[-log_g_band, 0]`` and the approximate
    potentials are ``G (1 + delta)`` with ``|delta| <= gamma_rel``.
    """
    rows = rng.dirichlet(np.ones(n), size=(T, n))
    kernels = alpha / n + (1.0 - alpha) * rows
    kernels /= kernels.sum(axis=-1, keepdims=True)
    G = np.exp(rng.uniform(-log_g_band, 0.0, size=(T, n)))
    G_tilde = G * (1.0 + rng.uniform(-gamma_rel, gamma_rel, size=(T, n)))
    return FiniteFlow(rng.dirichlet(np.ones(n)), kernels, G, G_tilde)


PROP1_COLUMNS = ("instance", "n", "T", "gamma_rel", "eps_m", "eps_g", "sup_tv", "bound", "margin", "lemma1_ok")


def prop1_sweep(n_instances, rng, n=6, T=40, **kw):
    """Rows of the random-instance study (also checks the lemma at every step)."""
    rows = []
    for i in range(n_instances):
        flow = random_flow(rng, n, T, **kw)
        res = prop1_check(flow)
        exact, _ = flow_evolve(flow)
        lemma_ok = all(
            lemma1_check(exact[t], flow.potentials[t], flow.approx_potentials[t])[2] for t in range(flow.T)
        )
        c = res.constants
        rows.append(
            dict(
                instance=i,
                n=n,
                T=T,
                gamma_rel=c.gamma_rel,
                eps_m=c.eps_m,
                eps_g=c.eps_g,
                sup_tv=res.sup_tv,
                bound=res.bound,
                margin=res.margin,
                lemma1_ok=int(lemma_ok),
            )
        )
    return rows


def write_rows(rows, dest, columns):
    """CSV with ``repr`` floats to a path or an open text handle."""
    if hasattr(dest, "write"):
        _write(rows, dest, columns)
        return
    with open(dest, "w", newline="") as fh:
        _write(rows, fh, columns)


def _write(rows, fh, columns):
    writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


# -- biased importance weights ---------------------------------------------------


@dataclass
class BiasedWeightLaw:
    """A discrete proposal ``q`` over a parameter grid with, per grid point, the
    exact weight ``w``, bias ``b`` and noise variances of the biased (``var_biased``)
    and unbiased (``var_unbiased``) weight estimators."""

    q: np.ndarray
    w: np.ndarray
    b: np.ndarray
    var_biased: np.ndarray
    var_unbiased: np.ndarray

    def __post_init__(self):
        for name in ("q", "w", "b", "var_biased", "var_unbiased"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if not np.isclose(self.q.sum(), 1.0):
            raise ValueError("q must sum to one")

    def mean(self, f):
        return float(self.q @ f)

    def var(self, f):
        return self.mean(f**2) - self.mean(f) ** 2

    def cov(self, f, g):
        return self.mean(f * g) - self.mean(f) * self.mean(g)


def mse_curves(law, P):
    """MSE of the unbiased and biased IS estimators of ``E_q[w]`` at sample sizes ``P``."""
    P = np.asarray(P, dtype=float)
    unbiased = (law.var(law.w) + law.mean(law.var_unbiased)) / P
    biased = (law.var(law.w + law.b) + law.mean(law.var_biased)) / P + law.mean(law.b) ** 2
    return unbiased, biased


@dataclass
class Breakeven:
    threshold: float | None
    verdict: str


def biased_is_breakeven(law):
    """Sample size below which the biased estimator has the smaller MSE."""
    gain = law.mean(law.var_unbiased - law.var_biased) - law.var(law.b) - 2.0 * law.cov(law.w, law.b)
    mean_b = law.mean(law.b)
    if mean_b == 0.0:
        if gain > 0:
            return Breakeven(None, "biased dominates at every P")
        return Breakeven(None, "unbiased weakly dominates at every P")
    threshold = gain / mean_b**2
    if threshold <= 0:
        return Breakeven(0.0, "unbiased dominates at every P")
    return Breakeven(threshold, "biased better for P below threshold")
