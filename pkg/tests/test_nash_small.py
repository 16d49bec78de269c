import numpy as np
import pytest

from mfgabsorb.errors import PreconditionError
from mfgabsorb.measures import SubProbMeasure
from mfgabsorb.mfg import toy_coupling, zero_coupling
from mfgabsorb.nash_small import (build_projection, exchangeability_defect, nash_residual,
                                  projection_gap, slice_identity_defect, solve_nash_two_player,
                                  w_average)
from mfgabsorb.pde1d import Coefficients, Grid1D, solve_hjb_backward

QUAD = Coefficients(1.0, "quadratic")
TOY = toy_coupling()
GRID = Grid1D(21, 101, 0.0, 0.1)


@pytest.fixture(scope="module")
def nash():
    return solve_nash_two_player(TOY, GRID, QUAD)


@pytest.fixture(scope="module")
def proj():
    return build_projection(TOY, GRID, QUAD, time_index=(0, 1), keep_solutions=True, tol=1e-10)


def test_terminal_data(nash):
    x = GRID.x
    np.testing.assert_array_equal(nash.v1[-1], np.outer(x * (1 - x), x * (1 - x)))


def test_slices_vanish_for_toy(nash):
    assert not nash.v1[:, :, 0].any() and not nash.v1[:, :, -1].any()
    assert not nash.v1[:, 0, :].any() and not nash.v1[:, -1, :].any()


def test_slice_identity_with_running_cost():
    from mfgabsorb.mfg import CouplingSpec

    c = CouplingSpec(F=lambda t, x, m: x * (1 - x) * (1 + m.mass),
                     G=lambda x, m: x * (1 - x) * (0.5 + m.mass))
    g = Grid1D(15, 41, 0.0, 0.1)
    ns = solve_nash_two_player(c, g, QUAD)
    assert slice_identity_defect(ns, c, QUAD) <= 1e-12
    ref = solve_hjb_backward(g, QUAD, g.x * (1 - g.x) * 0.5,
                             lambda t, x: x * (1 - x)).values
    np.testing.assert_array_equal(ns.v1[:, :, 0], ref)
    assert exchangeability_defect(ns) <= 1e-10


def test_exchangeability(nash):
    assert exchangeability_defect(nash) <= 1e-10


def test_comparison_bounds(nash):
    gmax = nash.v1[-1].max()
    assert nash.v1.min() >= 0.0 and nash.v1.max() <= gmax + 1e-15


def test_projection_at_terminal_time(nash):
    g = Grid1D(11, 3, 0.0, 0.1)
    ns = solve_nash_two_player(TOY, g, QUAD)
    # a one-step grid: the projection uses the MFG solve from t_1 = T - dt, compare at T
    # through the terminal data, which coincide exactly at N = 2
    x = g.x
    G = np.array([[TOY.terminal(np.array([a]), SubProbMeasure.dirac(b) if 0 < b < 1
                                else SubProbMeasure.zero())[0] for b in x] for a in x])
    np.testing.assert_array_equal(ns.v1[-1], G)


def test_zero_coupling_gap_and_residual():
    g = Grid1D(11, 21, 0.0, 0.1)
    z = zero_coupling()
    ns = solve_nash_two_player(z, g, QUAD)
    pr = build_projection(z, g, QUAD, time_index=(0, 1), keep_solutions=True)
    assert projection_gap(ns, pr) == 0.0
    assert nash_residual(pr, z, QUAD) == 0.0


def test_gap_and_residual_finite(nash, proj):
    gap = projection_gap(nash, proj)
    res = nash_residual(proj, TOY, QUAD, tol=1e-10)
    assert 0.0 < gap < 1e-3
    assert np.isfinite(res) and res < 0.05


def test_grid_mismatch(nash):
    other = build_projection(TOY, Grid1D(11, 51, 0.0, 0.1), QUAD)
    with pytest.raises(PreconditionError, match="grid mismatch"):
        projection_gap(nash, other)


def test_residual_needs_two_times():
    pr = build_projection(TOY, Grid1D(11, 21, 0.0, 0.1), QUAD)
    with pytest.raises(PreconditionError):
        nash_residual(pr, TOY, QUAD)


def test_w_average_close_to_U(nash):
    from mfgabsorb.mfg import solve_mfg

    m0 = SubProbMeasure.uniform(GRID.n_space, 1.0)
    w, se = w_average(nash, m0, seed=0, n_samples=2000)
    U = solve_mfg(m0, TOY, GRID, QUAD, tol=1e-10).u.values[0]
    assert np.all(np.isfinite(w)) and w[0] == 0.0
    assert np.max(np.abs(w - U)) < 0.01


def test_serialization(tmp_path, nash):
    nash.to_directory(tmp_path / "n")
    back = np.loadtxt(tmp_path / "n" / "v1_00000.csv", delimiter=",")
    np.testing.assert_array_equal(back, nash.v1[0])
