"""Evidence for an Ising lattice, where the likelihood normaliser sums over 2^100 states.

On a 10-column lattice the transfer matrix still gives the exact normaliser,
so quadrature over the single parameter gives a reference evidence.  The
importance samplers never look at it: they estimate 1/Z(theta) with
auxiliary draws from Gibbs chains (SAVIS) or along an annealed path from a
fixed theta_hat (MAVIS).
"""

import numpy as np

from evd import evidence_is as eis
from evd import kernels, zratio
from evd.core import SimConfig, make_rng
from evd.harness.oracles import ising_log_evidence
from evd.models import IsingModel

model = IsingModel(10, 10)
gibbs = SimConfig("gibbs", 20)
y = model.simulate(np.array([[0.3]]), SimConfig("gibbs", 1000), make_rng(7), None)[0]
truth = ising_log_evidence(model, y)
print(f"reference log evidence by quadrature: {truth:.4f}")

pilot = kernels.adaptive_pilot(model, y, 4000, 0.1, gibbs, make_rng(8))
theta_hat = pilot.mean
log_z_hat, _ = zratio.smc_log_z(theta_hat, model, 200, 100, make_rng(9))
print(f"pilot posterior mean {theta_hat[0]:.4f}; log Z there {log_z_hat:.3f} (exact {model.exact_log_z(theta_hat):.3f})")

prop = eis.GaussianProposal(pilot.mean, pilot.cov)
q_u = zratio.ModelAuxiliary(model, theta_hat, log_z_hat, exact=False)
for rep in range(3):
    theta = prop.sample(make_rng(10, rep), 200)
    s = eis.savis(model, y, prop, 200, 20, q_u, gibbs, make_rng(11, rep), theta=theta)
    m = eis.mavis(model, y, prop, 200, 38, 2, theta_hat, log_z_hat, gibbs, make_rng(12, rep), theta=theta)
    print(
        f"run {rep}: savis {s.log_evidence:.4f} (ESS {s.ess:5.1f}, {s.sweeps} sweeps)   "
        f"mavis {m.log_evidence:.4f} (ESS {m.ess:5.1f}, {m.sweeps} sweeps)"
    )
