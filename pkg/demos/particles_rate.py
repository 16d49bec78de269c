"""
Absorbed particles and the empirical measure
============================================

Players follow the mean-field feedback, die on hitting {0, 1}, and the
surviving empirical measure is compared with the Fokker-Planck density in
the flat metric.  The mean distance should decay like N^(-1/2).
"""

import numpy as np

from mfgabsorb import Coefficients, Grid1D, SubProbMeasure, solve_mfg
from mfgabsorb.harness import empirical_ladder, fit_rate
from mfgabsorb.mfg import toy_coupling
from mfgabsorb.particles import Policy, evaluate_cost, simulate_n_players

coeff = Coefficients(1.0, "quadratic")
grid = Grid1D(201, 1001, 0.0, 0.1)
m0 = SubProbMeasure.uniform(201, 1.0)
sol = solve_mfg(m0, toy_coupling(), grid, coeff, tol=1e-10)
print("mass left at T (FP):", sol.mass[-1])

ladder = [16, 64, 256]
mean, _ = empirical_ladder(m0, sol, coeff, ladder, seeds=range(8), dt=1e-4)
for N, d in zip(ladder, mean):
    print(f"N = {N:5d}  mean flat distance {d:.4f}")
print("fitted slope:", fit_rate(ladder, mean).slope)

# a tagged player started at 0.5: Monte-Carlo cost vs the value function
pol = Policy.mean_field(sol, coeff)
run = simulate_n_players(1000, m0, pol, 1.0, 0.0, 0.1, 1e-4, seed=7, x0=0.5,
                         record_stride=10 ** 6)
J = evaluate_cost(run, pol, toy_coupling(), reference=sol.m)
print(f"mean cost {J.mean():.5f} +- {J.std(ddof=1) / np.sqrt(J.size):.5f}, U = {sol.U(0.5):.5f}")
