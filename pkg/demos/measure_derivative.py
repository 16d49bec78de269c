"""
Derivatives in the measure argument
===================================

Perturb the initial measure, re-solve, and compare the difference
quotient with the linearized system.  The intrinsic derivative D_mU is the
y-gradient of the kernel dU/dm(x, y), which vanishes for y on the boundary.
"""

import numpy as np

from mfgabsorb import Coefficients, Grid1D, SubProbMeasure, solve_linearized, solve_mfg
from mfgabsorb.mfg import delta_U_kernel, taylor_residual, toy_coupling
from mfgabsorb.pde1d import spatial_gradient

coeff = Coefficients(1.0, "quadratic")
coupling = toy_coupling()
grid = Grid1D(101, 401, 0.0, 0.15)

m = SubProbMeasure.uniform(101, 0.5)
mp = SubProbMeasure.from_function(lambda x: 1.6 * np.sin(np.pi * x) ** 2, 101)
base = solve_mfg(m, coupling, grid, coeff, tol=1e-12)
direction = mp.values - m.values
linear = solve_linearized(base, coupling, direction, coeff, tol=1e-12).v0(0.5)

for s in (0.1, 0.05, 0.025):
    ms = SubProbMeasure.from_grid(m.values + s * direction, grid.dx)
    q = (solve_mfg(ms, coupling, grid, coeff, tol=1e-12).U(0.5) - base.U(0.5)) / s
    print(f"s = {s:<6} quotient {q:.10f}  linearized {linear:.10f}  gap {abs(q - linear):.2e}")

# the kernel in y for x = 0.5, and its y-gradient
ys = grid.x[::10]
K = delta_U_kernel(base, coupling, coeff, ys, tol=1e-11)[:, 50]
print("dU/dm(0.5, y):", np.round(K, 6))
print("D_mU(0.5, y): ", np.round(spatial_gradient(K, ys[1] - ys[0]), 6))

# second-order Taylor remainder
m01 = SubProbMeasure.uniform(101, 0.6)
print("Taylor remainder:", taylor_residual(m01, m, coupling, grid, coeff, tol=1e-12))
