"""Random-weight SMC sampler over the parameter with data-point tempering.

The sampler targets ``pi_t(theta) ∝ p(theta) f(y_{1:n_t} | theta)``.  At
step ``t`` the particles are reweighted by

    gamma_t(y | theta) / gamma_{t-1}(y | theta) * [Z_{t-1}(theta) / Z_t(theta)]

where the bracket is exact, an unbiased importance-sampling estimate, or a
biased bridge estimate, then resampled when the ESS is low, then moved by an
MCMC kernel for ``pi_t``.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from evd import kernels, zratio
from evd.core import BiasClass, NumericalAbort, RunReport, SimConfig, ess, log_sum_exp

# -- resampling ----------------------------------------------------------------


def _normalised(log_w):
    log_w = np.asarray(log_w, dtype=float)
    w = np.exp(log_w - log_sum_exp(log_w))
    return w / w.sum()


def resample(log_w, scheme, rng, size=None):
    """Ancestor indices drawn from normalised ``exp(log_w)``."""
    w = _normalised(log_w)
    n = len(w) if size is None else size
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    if scheme == "multinomial":
        points = rng.random(n)
    elif scheme == "stratified":
        points = (np.arange(n) + rng.random(n)) / n
    elif scheme == "systematic":
        points = (np.arange(n) + rng.random()) / n
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    return np.minimum(np.searchsorted(cdf, points, side="right"), len(w) - 1)


@dataclass(frozen=True)
class ResamplingPolicy:
    scheme: str = "systematic"
    trigger: str = "ess"
    #: ESS threshold as a fraction of P
    threshold: float = 0.5

    def __post_init__(self):
        if self.scheme not in ("multinomial", "stratified", "systematic"):
            raise ValueError(f"unknown resampling scheme {self.scheme!r}")
        if self.trigger not in ("always", "ess", "never"):
            raise ValueError(f"unknown resampling trigger {self.trigger!r}")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1] as a fraction of P")

    def due(self, ess_value, n_particles):
        if self.trigger == "always":
            return True
        if self.trigger == "never":
            return False
        return ess_value < self.threshold * n_particles


# -- schedules, weights, moves ---------------------------------------------------


@dataclass(frozen=True)
class TemperingSchedule:
    """Increasing data-prefix sizes ``n_1 < ... < n_T``.

    ``q_w`` is the normalised density of one added block; for lattice data
    every block must have the same size so a single ``q_w`` serves all steps.
    """

    counts: tuple
    q_w: object = None

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if not counts or counts[0] <= 0 or any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("prefix sizes must be positive and strictly increasing")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def data_points(cls, n_total, block=1, q_w=None):
        if n_total % block:
            raise ValueError("block size must divide the number of data units")
        return cls(tuple(range(block, n_total + 1, block)), q_w)

    @property
    def T(self):
        return len(self.counts)

    def steps(self):
        prev = 0
        for n in self.counts:
            yield prev, n
            prev = n

    def check(self, model):
        sizes = {b - a for a, b in self.steps()}
        if not model.iid_units and len(sizes) > 1:
            raise ValueError("non-i.i.d. data need equally sized blocks")


@dataclass(frozen=True)
class WeightMode:
    kind: str = "exact"
    M: int = 1
    sim: SimConfig = field(default_factory=lambda: SimConfig("exact"))

    def __post_init__(self):
        if self.kind not in ("exact", "unbiased", "bridge"):
            raise ValueError(f"unknown weight mode {self.kind!r}")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.kind == "bridge" and (self.M < 2 or self.M % 2):
            raise ValueError("bridge weights need an even M >= 2")

    def check(self, model, schedule):
        if self.kind == "exact" and not model.has_exact_log_z:
            raise ValueError(f"exact weights need an exact normalising constant; {model.name} has none")
        if self.kind != "exact" and schedule.q_w is None:
            raise ValueError("random weights need a block density q_w")

    def bias(self, model):
        if self.kind == "exact":
            return BiasClass.EXACT
        if self.kind == "bridge":
            return BiasClass.BIASED
        return BiasClass.UNBIASED if self.sim.is_exact(model) else BiasClass.BIASED

    def log_ratio(self, theta, model, n_prev, n_new, q_w, rng):
        if self.kind == "exact":
            return zratio.exact_tempering_ratio(theta, model, n_prev, n_new)
        if self.kind == "unbiased":
            return zratio.tempering_is_ratio(theta, model, n_prev, n_new, q_w, self.M, self.sim, rng)
        return zratio.bridge_ratio(theta, model, n_prev, n_new, q_w, self.M, self.sim, rng)


@dataclass(frozen=True)
class MoveConfig:
    """``kind``: exchange, mh (tractable Z), perfect (conjugate draw) or none."""

    kind: str = "exchange"
    sim: SimConfig = field(default_factory=lambda: SimConfig("exact"))
    n_moves: int = 1
    initial_scale: float | None = None
    scale_factor: float = 1.0
    min_scale: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("exchange", "mh", "perfect", "none"):
            raise ValueError(f"unknown move kernel {self.kind!r}")

    def bias(self, model):
        if self.kind == "exchange" and not self.sim.is_exact(model):
            return BiasClass.BIASED
        return BiasClass.EXACT


def _cloud_scale(theta, log_w, move):
    w = _normalised(log_w)
    mean = w @ theta
    sd = np.sqrt(np.maximum(w @ (theta - mean) ** 2, 0.0))
    return np.maximum(move.scale_factor * sd, move.min_scale)


class _Target:
    """Log posterior on a data prefix, with data statistics cached per prefix."""

    def __init__(self, model, y):
        self.model, self.y = model, y
        self._stats = {}

    def stats(self, n):
        if n not in self._stats:
            self._stats[n] = (self.model.stats(self.y, n), self.model.log_base(self.y, n))
        return self._stats[n]

    def log_gamma(self, theta, n):
        if n == 0:
            return np.zeros(len(theta))
        s, h = self.stats(n)
        return self.model.natural(theta) @ s + h

    def log_posterior(self, theta, n):
        lp = self.model.log_prior(theta)
        out = np.full(len(theta), -np.inf)
        ok = np.isfinite(lp)
        if ok.any():
            sub = theta[ok]
            out[ok] = lp[ok] + self.log_gamma(sub, n) - self.model.exact_log_z(sub, n)
        return out


def _move(theta, log_w, model, target, move, n, rng, scale):
    if move.kind == "none":
        return theta, float("nan"), 0
    if move.kind == "perfect":
        return kernels.perfect_posterior_draw(model, target.y, rng, len(theta), n), 1.0, 0
    cost, acc = 0, 0.0
    for _ in range(move.n_moves):
        if move.kind == "mh":
            theta, rate, _ = kernels.single_site_mh_sweep(theta, lambda th: target.log_posterior(th, n), scale, rng)
        else:
            s, _ = target.stats(n)
            theta, accepted = kernels.exchange_step(theta, model, target.y, scale, move.sim, rng, n, stats_y=s)
            rate = accepted.mean()
            cost += len(theta) * move.sim.cost(model)
        acc += rate
    return theta, acc / move.n_moves, cost


def smc_run(model, y, schedule, weights, move, P, resampling=None, rng=None, init=None, trace_path=None):
    """Random-weight SMC with data-point tempering; returns ``(RunReport, trace)``.

    ``init`` optionally supplies the initial ``(P, dim)`` particles (default:
    prior draws).  Each trace row holds ``t, n_units, ess, log_evidence,
    acceptance_rate, resampled``.
    """
    resampling = resampling or ResamplingPolicy()
    schedule.check(model)
    weights.check(model, schedule)
    start = time.perf_counter()
    target = _Target(model, y)
    theta = model.sample_prior(rng, P) if init is None else np.array(init, dtype=float)
    log_w = np.zeros(P)
    log_z, sweeps, degenerate_run, warned = 0.0, 0, 0, False
    bias = BiasClass.combine(weights.bias(model), move.bias(model))
    scale = None if move.initial_scale is None else np.full(theta.shape[1], move.initial_scale)
    trace = []
    for t, (n_prev, n_new) in enumerate(schedule.steps(), start=1):
        ratio = weights.log_ratio(theta, model, n_prev, n_new, schedule.q_w, rng)
        sweeps += ratio.cost
        incr = target.log_gamma(theta, n_new) - target.log_gamma(theta, n_prev) + ratio.value
        if np.any(np.isnan(incr)):
            raise NumericalAbort(
                f"NaN incremental weight at step {t}",
                {"t": t, "n_nan": int(np.isnan(incr).sum()), "theta": theta[np.isnan(incr)][:5].tolist()},
            )
        with np.errstate(invalid="ignore"):
            log_z += log_sum_exp(log_w + incr) - log_sum_exp(log_w)
        log_w = log_w + incr
        if not np.isfinite(log_sum_exp(log_w)):
            trace.append(dict(t=t, n_units=n_new, ess=0.0, log_evidence=log_z, acceptance_rate=float("nan"), resampled=0))
            break
        e = ess(log_w)
        degenerate_run = degenerate_run + 1 if e <= 1.0 + 1e-9 else 0
        if degenerate_run >= 3 and not warned:
            warnings.warn(f"SMC weights degenerate (ESS = 1) for 3 consecutive targets at t={t}", RuntimeWarning)
            warned = True
        if move.kind in ("exchange", "mh") and (t > 1 or scale is None):
            scale = _cloud_scale(theta, log_w, move)
        resampled = resampling.due(e, P)
        if resampled:
            idx = resample(log_w, resampling.scheme, rng)
            theta, log_w = theta[idx], np.zeros(P)
        theta, acc, cost = _move(theta, log_w, model, target, move, n_new, rng, scale)
        sweeps += cost
        trace.append(dict(t=t, n_units=n_new, ess=e, log_evidence=log_z, acceptance_rate=acc, resampled=int(resampled)))
    final_ess = ess(log_w) if np.isfinite(log_sum_exp(log_w)) else 0.0
    report = RunReport(
        estimator=f"smc-{weights.kind}-{move.kind}",
        log_evidence=float(log_z),
        bias=bias,
        ess=final_ess,
        n_particles=P,
        sweeps=int(sweeps),
        wall_time=time.perf_counter() - start,
        log_weights=log_w,
        diagnostics={
            "min_ess": min((r["ess"] for r in trace), default=float(P)),
            "resamples": sum(r["resampled"] for r in trace),
            "degenerate": int(warned),
        },
        particles=theta,
    )
    if trace_path is not None:
        write_trace(trace, trace_path)
    return report, trace


TRACE_COLUMNS = ("t", "n_units", "ess", "log_evidence", "acceptance_rate", "resampled")


def write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in trace:
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})


# -- weight identity under an exchange move --------------------------------------------


def exchange_kernel_density(model, y, theta, theta_new, n_units, log_q):
    """Off-diagonal density of the exact-simulation exchange kernel, by enumeration.

    ``log_q`` is the proposal log density from ``theta`` to ``theta_new``.
    """
    theta = np.atleast_2d(theta)
    theta_new = np.atleast_2d(theta_new)
    data = model.enumerate_data(n_units)
    s_data = model.stats(data, n_units)
    f_new = model.log_gamma(data, np.broadcast_to(theta_new, (len(data), theta_new.shape[1])), n_units)
    f_new = f_new - model.exact_log_z(theta_new[0], n_units)
    log_a = kernels.exchange_log_accept(
        model,
        np.broadcast_to(theta, (len(data), theta.shape[1])),
        np.broadcast_to(theta_new, (len(data), theta.shape[1])),
        model.stats(y, n_units),
        s_data,
    )
    return log_q + log_sum_exp(f_new + np.minimum(log_a, 0.0))


def weight_identity_check(model, y, theta, theta_new, n_prev, n_new, scale=0.3, tol=1e-12):
    """Check the generic SMC weight for an exchange move against the MCMC form.

    The generic incremental weight for a move ``theta -> theta_new`` with the
    time-reversal backward kernel is

        pi~_t(theta_new) K_t(theta_new, theta) / (pi~_{t-1}(theta) K_t(theta, theta_new)),

    with ``K_t`` the exchange kernel evaluated exactly by enumerating the
    auxiliary draw.  It must equal ``gamma_t(y|theta)/gamma_{t-1}(y|theta) *
    Z_{t-1}(theta)/Z_t(theta)``.  Returns ``(holds, generic, direct)`` in logs.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_new = np.atleast_1d(np.asarray(theta_new, dtype=float))
    # symmetric Gaussian proposal: the density cancels but is kept for clarity
    log_q = -0.5 * np.sum((theta_new - theta) ** 2) / scale**2

    def log_post(th, n):
        if n == 0:
            return float(model.log_prior(th))
        return float(model.log_prior(th) + model.log_gamma(y, th, n) - model.exact_log_z(th, n))

    k_fwd = exchange_kernel_density(model, y, theta, theta_new, n_new, log_q)
    k_bwd = exchange_kernel_density(model, y, theta_new, theta, n_new, log_q)
    generic = log_post(theta_new, n_new) + k_bwd - log_post(theta, n_prev) - k_fwd
    direct = log_post(theta, n_new) - log_post(theta, n_prev)
    return abs(generic - direct) <= tol * max(1.0, abs(direct)), generic, direct
