"""How far can an approximate Feynman-Kac flow drift?

Replace each potential G_t by an approximation within a relative error
gamma and run both flows exactly on a few states.  If every kernel mixes
(epsilon_M) and no potential dominates (epsilon_G), the total-variation gap
stays bounded uniformly in time.  Here we measure the gap and compare it
with the bound built from the measured constants.
"""

import numpy as np

from evd import theory
from evd.core import make_rng

rng = make_rng(11)
print(f"{'alpha':>6} {'eps_M':>7} {'eps_G':>7} {'sup TV':>9} {'bound':>9}")
for alpha in (0.3, 0.6, 0.9):
    flow = theory.random_flow(rng, n=6, T=40, alpha=alpha, gamma_rel=0.05)
    res = theory.prop1_check(flow)
    c = res.constants
    print(f"{alpha:6.1f} {c.eps_m:7.3f} {c.eps_g:7.3f} {res.sup_tv:9.2e} {res.bound:9.2e}")

# the gap over time for one instance: no accumulation
flow = theory.random_flow(rng, n=6, T=200, alpha=0.6, gamma_rel=0.05)
exact, approx = theory.flow_evolve(flow)
tv = np.array([theory.total_variation(p, q) for p, q in zip(exact, approx)])
print("\nTV gap at t = 1, 10, 50, 100, 200:", np.round(tv[[1, 10, 50, 100, 200]], 5))
print("The bound is loose by orders of magnitude but it does not grow with T, and neither does the gap.")
