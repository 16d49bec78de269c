"""Mean-field games with absorbing boundaries on the unit interval."""

from .errors import CFLError, ConvergenceError, MFGAbsorbError, PreconditionError
from .measures import (EmpiricalState, SubProbMeasure, empirical_measure, flat_distance,
                       grid_project, moment)
from .pde1d import (Coefficients, Grid1D, SpaceTimeField, cole_hopf, inverse_cole_hopf,
                    solve_fp_forward, solve_hjb_backward, spatial_gradient)
from .mfg import (CouplingSpec, MFGSolution, delta_U, evaluate_U, solve_linearized, solve_mfg,
                  taylor_residual, toy_coupling, zero_coupling)
from .toy_model import ToySolution, series_U, sine_coefficients, toy_cross_check, toy_fixed_point

__version__ = "0.1.0"
