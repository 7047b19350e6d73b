"""Log-domain numerics, seeded randomness and small shared types.

Every weight, evidence and normalising-constant ratio in this package is
carried as a natural logarithm.  The helpers here are the only places that
exponentiate, and they always shift by the maximum first.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp as _logsumexp

__all__ = [
    "BiasClass",
    "LogWeightEstimate",
    "SimConfig",
    "RunReport",
    "log_sum_exp",
    "log_mean_exp",
    "normalise_log_weights",
    "ess",
    "make_rng",
    "child_rngs",
    "NumericalAbort",
]


def log_sum_exp(terms, axis=None):
    """Return ``log(sum(exp(terms)))`` computed without overflow.

    Raises ``ValueError`` for an empty input.  All ``-inf`` terms give
    ``-inf``; a ``+inf`` term gives ``+inf``.
    """
    terms = np.asarray(terms, dtype=float)
    if terms.size == 0 or (axis is not None and terms.shape[axis] == 0):
        raise ValueError("log_sum_exp of an empty vector")
    with np.errstate(invalid="ignore"):
        out = _logsumexp(terms, axis=axis)
    if axis is None:
        return float(out)
    return out


def log_mean_exp(terms, axis=None):
    """``log_sum_exp(terms) - log(len(terms))`` along ``axis``."""
    terms = np.asarray(terms, dtype=float)
    count = terms.size if axis is None else terms.shape[axis]
    total = log_sum_exp(terms, axis=axis)  # raises on empty input
    return total - np.log(count)


def normalise_log_weights(log_w):
    """Normalised log-weights (they sum to one in the linear domain)."""
    log_w = np.asarray(log_w, dtype=float)
    total = log_sum_exp(log_w)
    if not np.isfinite(total):
        raise FloatingPointError("cannot normalise: total weight is %r" % np.exp(total))
    return log_w - total


def ess(log_w):
    """Effective sample size ``1 / sum(w_p^2)`` of (possibly unnormalised) log-weights.

    Returns 0.0 when every weight is zero.
    """
    log_w = np.asarray(log_w, dtype=float)
    if log_w.size == 0:
        raise ValueError("ess of an empty weight vector")
    if not np.any(np.isfinite(log_w)) and np.all(log_w == -np.inf):
        return 0.0
    value = np.exp(2.0 * log_sum_exp(log_w) - log_sum_exp(2.0 * log_w))
    # rounding can push the result a hair outside [1, P]
    return float(min(max(value, 1.0), log_w.size))


def make_rng(seed, *keys):
    """A numpy ``Generator`` for the stream identified by ``(seed, *keys)``.

    Distinct key tuples give statistically independent streams; the same
    tuple always gives the same stream.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def child_rngs(rng, n):
    """``n`` independent generators derived deterministically from ``rng``."""
    return [np.random.Generator(np.random.PCG64(s)) for s in rng.bit_generator.seed_seq.spawn(n)]


class NumericalAbort(FloatingPointError):
    """A NaN or otherwise unrecoverable value inside an estimator."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BiasClass(enum.IntEnum):
    """What is known about the expectation of a randomised weight.

    Ordered so that combining estimates takes the maximum.
    """

    EXACT = 0
    UNBIASED = 1
    BIASED = 2

    @classmethod
    def combine(cls, *classes):
        return cls(max(int(c) for c in classes)) if classes else cls.EXACT

    def __str__(self):
        return self.name.lower()


@dataclass(frozen=True)
class SimConfig:
    """How auxiliary data are drawn from ``f(.|theta)``.

    ``mode='exact'`` uses the model's exact sampler.  ``mode='gibbs'`` starts
    from a uniformly random configuration and runs ``burn_in`` raster-order
    single-site Gibbs sweeps.
    """

    mode: str = "gibbs"
    burn_in: int = 0

    def __post_init__(self):
        if self.mode not in ("exact", "gibbs"):
            raise ValueError(f"unknown simulation mode {self.mode!r}")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")

    def cost(self, model):
        """Sweep-equivalents charged per simulated data set.

        The initial configuration counts as one unit; exact or i.i.d. draws
        cost exactly one unit.
        """
        if self.mode == "exact" or getattr(model, "exact_simulation", False):
            return 1
        return self.burn_in + 1

    def is_exact(self, model):
        return self.mode == "exact" or getattr(model, "exact_simulation", False)


@dataclass
class LogWeightEstimate:
    """Randomised log-weight(s) with their bias class and simulation cost.

    ``value`` may be a scalar or an array (one entry per particle).
    """

    value: np.ndarray | float
    bias: BiasClass
    cost: int = 0


@dataclass
class RunReport:
    """One replicate of an evidence estimator."""

    estimator: str
    log_evidence: float
    bias: BiasClass
    ess: float
    n_particles: int
    seed: int | None = None
    sweeps: int = 0
    wall_time: float = 0.0
    summary_marginal: bool = False
    log_weights: np.ndarray | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)
    particles: np.ndarray | None = field(default=None, repr=False)

    @property
    def flagged(self):
        return not np.isfinite(self.log_evidence)

    def row(self):
        """Flat dict for CSV output (timing excluded so rows are reproducible)."""
        out = {
            "estimator": self.estimator,
            "log_evidence": self.log_evidence,
            "bias_class": str(self.bias),
            "ess": self.ess,
            "n_particles": self.n_particles,
            "seed": self.seed,
            "sweeps": self.sweeps,
            "summary_marginal": int(self.summary_marginal),
        }
        for key in sorted(self.diagnostics):
            val = self.diagnostics[key]
            if np.isscalar(val):
                out[key] = val
        return out
