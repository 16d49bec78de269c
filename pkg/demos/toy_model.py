"""
Closed-form toy model
=====================

The toy coupling has no running cost and the terminal cost
x(1-x) times the bump moment of the terminal measure.  Its value function
comes from a heat-series expansion once the moment ``c`` is known, so it
makes a good check on the generic forward-backward solver.
"""

import numpy as np

from mfgabsorb import Grid1D, SubProbMeasure, series_U, toy_cross_check, toy_fixed_point

grid = Grid1D(201, 801, 0.0, 0.5)
m0 = SubProbMeasure.uniform(201, 1.0)

# fixed point in the scalar moment, two ways
damped = toy_fixed_point(m0, grid)
bisect = toy_fixed_point(m0, grid, method="bisection")
print("c* (damped)    ", damped.c_star)
print("c* (bisection) ", bisect.c_star)

# the generic MFG solver should land on the same value function
rep = toy_cross_check(m0, grid)
print("sup |U_mfg - U_series| at t0:", rep["sup_gap_U"])

# at t = T the series must give back the terminal cost exactly
x = np.linspace(0, 1, 11)
c = damped.c_star
print("terminal check:", np.max(np.abs(series_U(c, 0.5, x, T=0.5) - c * x * (1 - x))))
