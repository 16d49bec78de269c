"""
Two-player Nash system
======================

For N = 2 the Nash system is a pair of 2-D PDEs on the square.  Once the
co-player is absorbed, the survivor solves a 1-D HJB with the zero
measure, which fixes the data on the edges x_j in {0, 1}.  Here we solve
it and compare it with the projection of the mean-field value function.
"""

from mfgabsorb import Coefficients, Grid1D, SubProbMeasure
from mfgabsorb.mfg import toy_coupling
from mfgabsorb.nash_small import (build_projection, exchangeability_defect, nash_residual,
                                  projection_gap, slice_identity_defect, solve_nash_two_player,
                                  w_average)

coeff = Coefficients(1.0, "quadratic")
coupling = toy_coupling()
grid = Grid1D(21, 101, 0.0, 0.1)

nash = solve_nash_two_player(coupling, grid, coeff)
print("slice defect:        ", slice_identity_defect(nash, coupling, coeff))
print("exchangeability:     ", exchangeability_defect(nash))

proj = build_projection(coupling, grid, coeff, time_index=(0, 1), keep_solutions=True, tol=1e-10)
print("projection gap:      ", projection_gap(nash, proj))
print("Nash residual:       ", nash_residual(proj, coupling, coeff, tol=1e-10))

w, se = w_average(nash, SubProbMeasure.uniform(21, 1.0), n_samples=2000)
print("averaged Nash value at x1 = 0.5:", w[10], "+-", se[10])
