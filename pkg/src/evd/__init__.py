"""Evidence and Bayes factor estimation for models whose likelihood has an
intractable normalising constant."""

from evd.core import BiasClass, LogWeightEstimate, RunReport, SimConfig, log_mean_exp, log_sum_exp, make_rng

__version__ = "0.1.0"

__all__ = ["BiasClass", "LogWeightEstimate", "RunReport", "SimConfig", "log_mean_exp", "log_sum_exp", "make_rng"]
