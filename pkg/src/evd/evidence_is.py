"""Importance-sampling estimators of the evidence and of Bayes factors.

All estimators draw ``P`` parameters from a proposal ``q`` and average
weights ``p(theta) L(theta) / q(theta)`` where ``L`` is the exact likelihood
(ideal IS), an unbiased estimate of it (SAVIS, MAVIS), or a summary-based
approximation (ABC-IS, SL-IS).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from evd import zratio
from evd.core import BiasClass, RunReport, SimConfig, ess, log_mean_exp

# -- proposals ------------------------------------------------------------------


class PriorProposal:
    kind = "prior"

    def __init__(self, model):
        self.model = model

    def sample(self, rng, size):
        return self.model.sample_prior(rng, size)

    def logpdf(self, theta):
        return self.model.log_prior(theta)


class GaussianProposal:
    kind = "gaussian"

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self._dist = sps.multivariate_normal(self.mean, self.cov)

    @classmethod
    def from_samples(cls, samples, inflate=1.0, min_sd=1e-6):
        """Moment-matched proposal; ``inflate`` scales the standard deviations."""
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        cov = np.atleast_2d(np.cov(samples, rowvar=False))
        cov = cov + np.diag(np.full(len(cov), min_sd**2))
        return cls(samples.mean(axis=0), inflate**2 * cov)

    def sample(self, rng, size):
        return self._dist.rvs(size=size, random_state=rng).reshape(size, len(self.mean))

    def logpdf(self, theta):
        return np.atleast_1d(self._dist.logpdf(np.atleast_2d(theta)))


# -- shared plumbing -----------------------------------------------------------------


def _draw(model, proposal, P, rng, theta=None):
    theta = proposal.sample(rng, P) if theta is None else np.atleast_2d(np.asarray(theta, dtype=float))
    lp = model.log_prior(theta)
    return theta, lp, np.isfinite(lp)


def _report(name, log_w, bias, sweeps, start, summary_marginal=False, **diagnostics):
    log_w = np.asarray(log_w, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        value = log_mean_exp(log_w)
    finite = np.isfinite(log_w)
    diagnostics.setdefault("n_zero_weight", int(np.sum(log_w == -np.inf)))
    return RunReport(
        estimator=name,
        log_evidence=float(value) if not np.isnan(value) else float("-inf"),
        bias=bias,
        ess=ess(log_w) if finite.any() else 0.0,
        n_particles=len(log_w),
        sweeps=int(sweeps),
        wall_time=time.perf_counter() - start,
        summary_marginal=summary_marginal,
        log_weights=log_w,
        diagnostics=diagnostics,
    )


def _base_log_w(model, y, theta, lp, ok, proposal):
    """``log p + log gamma(y|theta) - log q`` with ``-inf`` outside the prior support."""
    out = np.full(len(theta), -np.inf)
    if ok.any():
        out[ok] = lp[ok] + model.log_gamma(y, theta[ok]) - proposal.logpdf(theta[ok])
    return out


# -- estimators ---------------------------------------------------------------------


def ideal_is(model, y, proposal, P, rng, theta=None):
    """IS with the exact likelihood; needs ``model.exact_log_z``."""
    start = time.perf_counter()
    theta, lp, ok = _draw(model, proposal, P, rng, theta)
    log_w = _base_log_w(model, y, theta, lp, ok, proposal)
    n = model.n_units(y)
    log_w[ok] -= model.exact_log_z(theta[ok], n)
    return _report("ideal-is", log_w, BiasClass.EXACT, 0, start)


def savis(model, y, proposal, P, M, q_u, sim, rng, theta=None):
    """Single auxiliary variable IS: ``M`` draws per particle estimate ``1/Z(theta)``."""
    start = time.perf_counter()
    theta, lp, ok = _draw(model, proposal, P, rng, theta)
    log_w = _base_log_w(model, y, theta, lp, ok, proposal)
    n = model.n_units(y)
    est = zratio.sav_inv_z(theta[ok], model, q_u, M, sim, rng, n)
    log_w[ok] += est.value
    return _report("savis", log_w, est.bias, est.cost, start, M=M, burn_in=sim.burn_in)


def mavis(model, y, proposal, P, K, M, theta_hat, log_z_hat, sim, rng, log_z_exact=False, theta=None):
    """Multiple auxiliary variable IS: AIS estimate of ``Z(theta_hat)/Z(theta)``
    over ``K`` intermediate targets, divided by a supplied ``Z(theta_hat)``.

    ``log_z_exact`` marks ``log_z_hat`` as exact rather than estimated.
    """
    start = time.perf_counter()
    theta, lp, ok = _draw(model, proposal, P, rng, theta)
    log_w = _base_log_w(model, y, theta, lp, ok, proposal)
    n = model.n_units(y)
    est = zratio.mav_ratio(theta[ok], theta_hat, model, K, M, sim, rng, n)
    log_w[ok] += est.value - log_z_hat
    bias = est.bias if log_z_exact else BiasClass.BIASED
    return _report("mavis", log_w, bias, est.cost, start, K=K, M=M, burn_in=sim.burn_in)


def relative_distance(s_sim, s_obs):
    """``max_j |S_j(u) - S_j(y)| / |S_j(y)|`` with unit scale where ``S_j(y) = 0``."""
    s_obs = np.asarray(s_obs, dtype=float)
    scale = np.where(s_obs != 0, np.abs(s_obs), 1.0)
    return np.max(np.abs(np.asarray(s_sim) - s_obs) / scale, axis=-1)


def _simulate_summaries(model, theta, R, sim, rng, n):
    return model.summary(model.simulate_repeated(theta, R, sim, rng, n))


def abc_is(model, y, proposal, P, eps, R, rng, sim=None):
    """ABC-IS with a bare uniform indicator kernel on the relative distance.

    Estimates the ABC marginal of the summary up to the kernel volume, so it
    is only meaningful in ratios between models sharing the same summary.
    """
    if eps <= 0 or R < 1:
        raise ValueError("need eps > 0 and R >= 1")
    start = time.perf_counter()
    sim = sim or SimConfig("exact")
    theta, lp, ok = _draw(model, proposal, P, rng)
    s_obs = model.summary(y)
    log_w = np.full(P, -np.inf)
    n_acc = 0
    if ok.any():
        d = relative_distance(_simulate_summaries(model, theta[ok], R, sim, rng, model.n_units(y)), s_obs)
        hits = (d <= eps).sum(axis=1)
        n_acc = int(hits.sum())
        with np.errstate(divide="ignore"):
            log_w[ok] = lp[ok] - proposal.logpdf(theta[ok]) + np.log(hits / R)
    cost = int(ok.sum()) * R * sim.cost(model)
    return _report("abc-is", log_w, BiasClass.BIASED, cost, start, summary_marginal=True, eps=eps, R=R, n_accepted=n_acc)


def sl_log_density(s_sims, s_obs):
    """Gaussian synthetic log-likelihood per particle and a singularity mask.

    ``s_sims`` is ``(P, M, k)``; the covariance uses the ``M - 1`` divisor.
    """
    s_sims = np.asarray(s_sims, dtype=float)
    P, M, k = s_sims.shape
    mu = s_sims.mean(axis=1)
    centred = s_sims - mu[:, None, :]
    cov = np.einsum("pmi,pmj->pij", centred, centred) / (M - 1)
    eig = np.linalg.eigvalsh(cov)
    singular = ~(eig[:, 0] > 1e-12 * np.maximum(eig[:, -1], 1e-300))
    out = np.full(P, -np.inf)
    good = ~singular
    if good.any():
        chol = np.linalg.cholesky(cov[good])
        diff = np.asarray(s_obs, dtype=float) - mu[good]
        z = np.linalg.solve(chol, diff[..., None])[..., 0]
        log_det = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
        out[good] = -0.5 * (k * np.log(2 * np.pi) + log_det + (z**2).sum(axis=-1))
    return out, singular


def sl_is(model, y, proposal, P, M, rng, sim=None):
    """Synthetic-likelihood IS with ``M`` simulations per particle."""
    start = time.perf_counter()
    sim = sim or SimConfig("exact")
    s_obs = model.summary(y)
    if M < np.size(s_obs) + 2:
        raise ValueError("M must be at least the summary dimension plus 2")
    theta, lp, ok = _draw(model, proposal, P, rng)
    log_w = np.full(P, -np.inf)
    n_singular = 0
    if ok.any():
        sims = _simulate_summaries(model, theta[ok], M, sim, rng, model.n_units(y))
        log_sl, singular = sl_log_density(sims, s_obs)
        n_singular = int(singular.sum())
        log_w[ok] = lp[ok] - proposal.logpdf(theta[ok]) + log_sl
    cost = int(ok.sum()) * M * sim.cost(model)
    return _report("sl-is", log_w, BiasClass.BIASED, cost, start, summary_marginal=True, M=M, n_singular=n_singular)


# -- Bayes factors -------------------------------------------------------------------


@dataclass(frozen=True)
class BayesFactor:
    log_bf: float
    estimators: tuple
    summary_marginal: bool
    bias: BiasClass

    @property
    def defined(self):
        return bool(np.isfinite(self.log_bf))


def log_bayes_factor(report_1, report_2):
    """``log p(y|M1) - log p(y|M2)``; undefined (NaN) if either evidence is not finite."""
    a, b = report_1.log_evidence, report_2.log_evidence
    value = a - b if np.isfinite(a) and np.isfinite(b) else float("nan")
    return BayesFactor(
        float(value),
        (report_1.estimator, report_2.estimator),
        bool(report_1.summary_marginal or report_2.summary_marginal),
        BiasClass.combine(report_1.bias, report_2.bias),
    )
