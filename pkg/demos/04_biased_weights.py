"""When does a biased weight beat an unbiased one?

A biased estimator of the importance weight can still win on mean squared
error if its variance is much smaller, but only while the squared bias is
small next to the Monte Carlo variance, which shrinks as 1/P.  Below we find
the crossover sample size, then watch bias build up along an SMC run that
uses biased bridge estimates at every step.
"""

import numpy as np

from evd import theory
from evd.core import SimConfig, make_rng
from evd.models import GaussianBlock, GaussianPrecisionModel
from evd.smc import MoveConfig, TemperingSchedule, WeightMode, smc_run

law = theory.BiasedWeightLaw(
    q=[0.2, 0.5, 0.3],
    w=[0.5, 1.0, 2.0],
    b=[0.05, 0.1, 0.08],
    var_biased=[0.01, 0.02, 0.05],
    var_unbiased=[1.0, 2.0, 4.0],
)
verdict = theory.biased_is_breakeven(law)
print(f"breakeven P = {verdict.threshold:.1f}: {verdict.verdict}")
for P in (10, 100, 1000, 10000):
    u, b = theory.mse_curves(law, P)
    print(f"  P={P:>6}: unbiased MSE {float(u):.2e}   biased MSE {float(b):.2e}")

model = GaussianPrecisionModel(1, 200)
y = make_rng(5).normal(0.0, np.sqrt(0.1), (200, 1))
prefix = np.array([model.log_evidence(y, k) for k in range(1, 201)])
schedule = TemperingSchedule.data_points(200, 1, GaussianBlock.from_precision(model.mle_precision(y)))
exact = SimConfig("exact")

print("\nmean error of the log evidence over 10 runs, by number of data points added")
for kind, move in (("exact", "mh"), ("bridge", "mh"), ("bridge", "perfect")):
    curves = []
    for rep in range(10):
        _, trace = smc_run(model, y, schedule, WeightMode(kind, 20, exact), MoveConfig(move, exact), 50, rng=make_rng(6, rep))
        curves.append([row["log_evidence"] for row in trace])
    err = np.mean(np.array(curves) - prefix, axis=0)
    print(f"  {kind + '/' + move:>15}: " + "  ".join(f"t={t}: {err[t - 1]:+.3f}" for t in (50, 100, 150, 200)))
