"""Randomised estimators of ``1/Z(theta)`` and of normalising-constant ratios.

Each estimator returns a :class:`~evd.core.LogWeightEstimate` with one log
value per parameter row.  The ``*_log_terms`` helpers expose the individual
importance terms for given auxiliary draws, so that expectations can be
checked by summing over an enumerated data space.
"""

from __future__ import annotations

import warnings

import numpy as np

from evd.core import BiasClass, LogWeightEstimate, SimConfig, ess, log_mean_exp, log_sum_exp, make_rng


def _batch(theta):
    return np.atleast_2d(np.asarray(theta, dtype=float))


def _sim_bias(model, sim):
    return BiasClass.UNBIASED if sim.is_exact(model) else BiasClass.BIASED


class ModelAuxiliary:
    """``q_u = f(. | theta_hat)`` with a supplied (possibly estimated) ``log Z(theta_hat)``."""

    def __init__(self, model, theta_hat, log_z, n_units=None, exact=True):
        self.model = model
        self.theta_hat = np.asarray(theta_hat, dtype=float)
        self.log_z = float(log_z)
        self.n_units = n_units
        self.bias = BiasClass.EXACT if exact else BiasClass.BIASED

    def logpdf(self, u):
        return self.model.log_gamma(u, self.theta_hat, self.n_units) - self.log_z


def _repeat(theta, m):
    return np.repeat(theta, m, axis=0)


# -- single / multiple auxiliary variable -----------------------------------


def sav_log_terms(model, theta, u, q_u, n_units=None):
    """``log q_u(u) - log gamma(u | theta)`` for draws ``u`` paired row-wise with ``theta``."""
    return q_u.logpdf(u) - model.log_gamma(u, theta, n_units)


def sav_inv_z(theta, model, q_u, M, sim, rng, n_units=None):
    """Importance-sampling estimate of ``1/Z(theta)`` from ``M`` draws of ``f(.|theta)``."""
    theta = _batch(theta)
    if M < 1:
        raise ValueError("M must be at least 1")
    u = model.simulate_repeated(theta, M, sim, rng, n_units)
    terms = sav_log_terms(model, theta[:, None, :], u, q_u, n_units)
    with np.errstate(over="ignore"):
        value = log_mean_exp(terms, axis=1)
    bias = BiasClass.combine(_sim_bias(model, sim), getattr(q_u, "bias", BiasClass.EXACT))
    return LogWeightEstimate(value, bias, len(theta) * M * sim.cost(model))


def mav_log_terms(model, theta, theta_hat, stats_path):
    """AIS log-weights from the statistics ``S(u_0), ..., S(u_K)`` along the path.

    The geometric bridge is linear in the natural parameter, so every
    incremental ratio shares the same step ``(eta(theta_hat) - eta(theta)) / (K+1)``.
    """
    K = stats_path.shape[-2] - 1
    step = (model.natural(theta_hat) - model.natural(theta)) / (K + 1)
    return np.sum(step * stats_path.sum(axis=-2), axis=-1)


def mav_ratio(theta, theta_hat, model, K, M, sim, rng, n_units=None):
    """AIS estimate of ``Z(theta_hat) / Z(theta)``.

    Starts from ``u_0 ~ f(.|theta)`` drawn under ``sim`` and applies one
    Gibbs sweep at each of the ``K`` intermediate targets.  ``K = 0`` gives
    the single-point ratio ``gamma(u|theta_hat) / gamma(u|theta)``.
    """
    theta = _batch(theta)
    theta_hat = np.asarray(theta_hat, dtype=float)
    if K < 0 or M < 1:
        raise ValueError("need K >= 0 and M >= 1")
    reps = _repeat(theta, M)
    eta0 = model.natural(reps)
    eta1 = model.natural(np.broadcast_to(theta_hat, reps.shape))
    betas = np.arange(K + 1) / (K + 1)
    n = n_units
    if model.exact_simulation:
        # a sweep is a fresh draw, so every point on the path is an independent draw
        path = eta0[:, None, :] + betas[None, :, None] * (eta1 - eta0)[:, None, :]
        flat = path.reshape(-1, path.shape[-1])
        stats = model.sample_stats_natural(flat, sim, rng, n).reshape(len(reps), K + 1, -1)
    else:
        u = model.simulate_natural(eta0, sim, rng, n)
        stats = np.empty((len(reps), K + 1, model.n_stats))
        stats[:, 0] = model.stats(u, n)
        for k in range(1, K + 1):
            u = model.sweep_natural(u, eta0 + betas[k] * (eta1 - eta0), rng, n, 1)
            stats[:, k] = model.stats(u, n)
    terms = mav_log_terms(model, reps, theta_hat, stats).reshape(len(theta), M)
    with np.errstate(over="ignore"):
        value = log_mean_exp(terms, axis=1)
    return LogWeightEstimate(value, _sim_bias(model, sim), len(theta) * M * (sim.cost(model) + K))


# -- normalising constant by SMC in data space --------------------------------


def smc_log_z(theta_hat, model, P=200, T=100, rng=None, resample_threshold=0.5, n_units=None, sweeps=1):
    """SMC estimate of ``log Z(theta_hat)`` along ``eta_i = base + (i/T)(eta_hat - base)``.

    Starts from the model's exactly simulable base member; resamples
    (stratified) when the ESS drops below ``resample_threshold * P`` and
    moves every particle with ``sweeps`` Gibbs sweeps at each target.
    Returns ``(log_z, diagnostics)``.
    """
    from evd.smc import resample  # local import: smc depends on this module

    base = np.asarray(model.base_natural(), dtype=float)
    log_z = float(model.base_log_z(n_units))
    if T == 0:
        return log_z, {"min_ess": float(P), "resamples": 0}
    rng = rng if rng is not None else make_rng(0)
    eta_hat = model.natural(np.asarray(theta_hat, dtype=float))
    x = model.simulate_natural(np.tile(base, (P, 1)), SimConfig("gibbs", 0), rng, n_units)
    log_w = np.zeros(P)
    min_ess, n_resample, collapsed = float(P), 0, False
    prev = base
    for i in range(1, T + 1):
        cur = base + (i / T) * (eta_hat - base)
        incr = model.stats(x, n_units) @ (cur - prev)
        log_z += log_sum_exp(log_w + incr) - log_sum_exp(log_w)
        log_w = log_w + incr
        e = ess(log_w)
        min_ess = min(min_ess, e)
        if e <= 1.0 + 1e-9:
            collapsed = True
        if e < resample_threshold * P:
            idx = resample(log_w, "stratified", rng)
            x, log_w = x[idx], np.zeros(P)
            n_resample += 1
        x = model.sweep_natural(x, np.tile(cur, (P, 1)), rng, n_units, sweeps)
        prev = cur
    if collapsed:
        warnings.warn("smc_log_z: effective sample size collapsed to one particle", RuntimeWarning)
    return log_z, {"min_ess": min_ess, "resamples": n_resample, "collapsed": collapsed}


class LogZCache:
    """Memo of ``smc_log_z`` results keyed by model, ``theta_hat``, seed and settings."""

    def __init__(self):
        self._store = {}

    def __len__(self):
        return len(self._store)

    def get(self, model, theta_hat, seed, P=200, T=100, n_units=None):
        theta_hat = tuple(np.round(np.atleast_1d(np.asarray(theta_hat, dtype=float)), 12))
        key = (model.cache_key(), theta_hat, int(seed), P, T, n_units)
        if key not in self._store:
            self._store[key] = smc_log_z(np.array(theta_hat), model, P, T, make_rng(seed, 7), n_units=n_units)[0]
        return self._store[key]


# -- data-point tempering ratios ----------------------------------------------
#
# Each returns an estimate of Z_{t-1}(theta) / Z_t(theta), where Z_t normalises
# gamma on the first n_new units and Z_{t-1} on the first n_prev.


def tempering_log_terms(model, theta, u, n_prev, n_new, q_w):
    """``log gamma_{t-1}(v) + log q_w(w) - log gamma_t(u)`` with ``u = (v, w)``."""
    w = model.block(u, n_prev, n_new)
    if model.iid_units:
        return q_w.logpdf(w) - model.log_gamma(w, theta, n_new - n_prev)
    return model.log_gamma(u, theta, n_prev) + q_w.logpdf(w) - model.log_gamma(u, theta, n_new)


def tempering_is_ratio(theta, model, n_prev, n_new, q_w, M, sim, rng):
    """Unbiased (under exact draws) IS estimate of ``Z_{t-1}/Z_t`` with ``u ~ f_t``.

    For i.i.d. units only the new block is simulated.
    """
    theta = _batch(theta)
    n_sim = n_new - n_prev if model.iid_units else n_new
    u = model.simulate_repeated(theta, M, sim, rng, n_sim)
    lo = 0 if model.iid_units else n_prev
    terms = tempering_log_terms(model, theta[:, None, :], u, lo, lo + (n_new - n_prev), q_w)
    with np.errstate(over="ignore"):
        value = log_mean_exp(terms, axis=1)
    return LogWeightEstimate(value, _sim_bias(model, sim), len(theta) * M * _unit_cost(model, sim, n_sim))


def bridge_ratio(theta, model, n_prev, n_new, q_w, M, sim, rng):
    """Biased bridge estimate of ``Z_{t-1}/Z_t`` from ``M/2`` draws at each end."""
    if M < 2 or M % 2:
        raise ValueError("bridge estimator needs an even M >= 2")
    theta = _batch(theta)
    half = M // 2
    th = theta[:, None, :]
    if model.iid_units:
        k = n_new - n_prev
        fwd = tempering_log_terms(model, th, model.simulate_repeated(theta, half, sim, rng, k), 0, k, q_w)
        bwd = -tempering_log_terms(model, th, q_w.sample(rng, (len(theta), half)), 0, k, q_w)
        cost = len(theta) * half * _unit_cost(model, sim, k)
    else:
        u = model.simulate_repeated(theta, half, sim, rng, n_new)
        fwd = tempering_log_terms(model, th, u, n_prev, n_new, q_w)
        v = model.simulate_repeated(theta, half, sim, rng, n_prev)
        u_bwd = model.join(v, q_w.sample(rng, (len(theta), half)), n_prev, n_new)
        bwd = -tempering_log_terms(model, th, u_bwd, n_prev, n_new, q_w)
        cost = len(theta) * half * (_unit_cost(model, sim, n_new) + _unit_cost(model, sim, n_prev))
    with np.errstate(over="ignore", invalid="ignore"):
        value = log_sum_exp(0.5 * fwd, axis=1) - log_sum_exp(0.5 * bwd, axis=1)
    return LogWeightEstimate(value, BiasClass.BIASED, cost)


def exact_tempering_ratio(theta, model, n_prev, n_new):
    theta = _batch(theta)
    log_prev = model.exact_log_z(theta, n_prev) if n_prev > 0 else np.zeros(len(theta))
    return LogWeightEstimate(log_prev - model.exact_log_z(theta, n_new), BiasClass.EXACT, 0)


def _unit_cost(model, sim, n_units):
    return sim.cost(model) if n_units > 0 else 0
