"""Concrete models with their oracles."""

from evd.models.base import BlockDensity, UnnormalisedModel
from evd.models.ergm import ErgmModel, ergm_stats
from evd.models.ising import IsingModel, SpinBlockUniform, ising_exact_log_z, ising_stats
from evd.models.precision import GaussianBlock, GaussianPrecisionModel, gaussian_precision_log_evidence
from evd.models.toy import (
    GeometricModel,
    PoissonModel,
    generate_toy_datasets,
    geometric_log_evidence,
    poisson_log_evidence,
    toy_log_bayes_factor,
    toy_summary,
)
