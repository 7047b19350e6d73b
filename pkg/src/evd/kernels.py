"""MCMC kernels on the parameter: exchange, single-site random-walk MH, and
exact conjugate draws.  All kernels act on a batch of chains at once."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from evd.core import SimConfig


def _as_batch(theta):
    return np.atleast_2d(np.asarray(theta, dtype=float))


def exchange_log_accept(model, theta, proposal, stats_y, stats_u, log_prior=None, log_prior_prop=None):
    """Log acceptance ratio of the exchange move (symmetric proposal).

    ``stats_u`` are the statistics of an auxiliary draw at ``proposal``.  Only
    unnormalised likelihoods enter; ``log h`` cancels between data and draw.
    """
    lp = model.log_prior(theta) if log_prior is None else log_prior
    lp_new = model.log_prior(proposal) if log_prior_prop is None else log_prior_prop
    d_eta = model.natural(proposal) - model.natural(theta)
    with np.errstate(invalid="ignore"):
        out = lp_new - lp + np.sum(d_eta * (stats_y - stats_u), axis=-1)
    return np.where(np.isfinite(lp_new), out, -np.inf)


def exchange_step(theta, model, y, scales, sim, rng, n_units=None, stats_y=None):
    """One exchange move per chain, targeting ``p(theta) f(y_{1:n} | theta)``.

    Returns ``(theta_new, accepted)``.  Proposals outside the prior support
    are rejected; their auxiliary draw is still made so the random stream
    does not depend on the outcome.
    """
    theta = _as_batch(theta)
    if stats_y is None:
        stats_y = model.stats(y, n_units)
    proposal = theta + np.asarray(scales) * rng.standard_normal(theta.shape)
    lp = model.log_prior(theta)
    lp_new = model.log_prior(proposal)
    inside = np.isfinite(lp_new)
    safe = np.where(inside[:, None], proposal, theta)
    n = model.n_units(y) if n_units is None else n_units
    u = model.simulate(safe, sim, rng, n)
    log_a = exchange_log_accept(model, theta, safe, stats_y, model.stats(u, n), lp, np.where(inside, lp_new, -np.inf))
    accepted = np.log(rng.random(len(theta))) < log_a
    return np.where(accepted[:, None], safe, theta), accepted


def single_site_mh_sweep(theta, log_target, scales, rng, current=None):
    """One Gaussian random-walk MH update of each coordinate in turn.

    ``log_target`` maps a ``(C, dim)`` batch to ``(C,)`` log densities.
    Returns ``(theta_new, acceptance_rate, log_target(theta_new))``.
    """
    theta = _as_batch(theta).copy()
    scales = np.broadcast_to(np.asarray(scales, dtype=float), theta.shape)
    cur = log_target(theta) if current is None else np.asarray(current, dtype=float).copy()
    n_acc = 0
    for k in range(theta.shape[1]):
        prop = theta.copy()
        prop[:, k] += scales[:, k] * rng.standard_normal(len(theta))
        new = log_target(prop)
        with np.errstate(invalid="ignore"):
            acc = np.log(rng.random(len(theta))) < new - cur
        acc &= np.isfinite(new)
        theta[acc, k] = prop[acc, k]
        cur = np.where(acc, new, cur)
        n_acc += acc.sum()
    return theta, n_acc / theta.size, cur


def perfect_posterior_draw(model, y, rng, size, n_units=None):
    """Exact draws from the posterior given the first ``n_units`` observations."""
    sampler = getattr(model, "sample_posterior", None)
    if sampler is None:
        raise NotImplementedError(f"{model.name} has no conjugate posterior sampler")
    return sampler(y, rng, size, n_units)


@dataclass
class PilotResult:
    samples: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    acceptance: float

    @property
    def degenerate(self):
        return bool(np.all(np.diag(np.atleast_2d(self.cov)) <= 0))


def pilot_run(model, y, steps, scales, sim=None, rng=None, theta0=None, burn=0):
    """Exchange chain for proposal construction; returns sample moments."""
    if steps <= 0:
        raise ValueError("pilot run needs at least one step")
    sim = sim or SimConfig("exact")
    theta = model.sample_prior(rng, 1) if theta0 is None else _as_batch(theta0)
    stats_y = model.stats(y)
    samples = np.empty((steps, theta.shape[1]))
    n_acc = 0
    for i in range(steps):
        theta, acc = exchange_step(theta, model, y, scales, sim, rng, stats_y=stats_y)
        samples[i] = theta[0]
        n_acc += int(acc[0])
    kept = samples[burn:]
    cov = np.atleast_2d(np.cov(kept, rowvar=False)) if len(kept) > 1 else np.zeros((theta.shape[1],) * 2)
    return PilotResult(samples, kept.mean(axis=0), cov, n_acc / steps)


def adaptive_pilot(model, y, steps, scale, sim=None, rng=None, retries=4):
    """Two-stage exchange pilot: a first run at ``scale``, then a second run
    (from where the first stopped) at ``2.38 / sqrt(dim)`` times the first-run
    standard deviations.  A first run with no accepted moves is retried at a
    tenth of the scale.
    """
    dim = model.dim
    first_steps = max(steps // 2, 2)
    for _ in range(retries):
        first = pilot_run(model, y, first_steps, np.full(dim, scale), sim, rng)
        if first.acceptance > 0 and not first.degenerate:
            break
        scale /= 10.0
    sd = np.sqrt(np.maximum(np.diag(first.cov), 0.0))
    second_scale = np.where(sd > 0, 2.38 / np.sqrt(dim) * sd, scale)
    return pilot_run(model, y, steps - first_steps, second_scale, sim, rng, theta0=first.samples[-1], burn=0)
