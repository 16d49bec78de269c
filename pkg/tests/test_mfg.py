import numpy as np
import pytest

from mfgabsorb.errors import ConvergenceError, PreconditionError
from mfgabsorb.measures import SubProbMeasure, flat_distance, mollified_dirac
from mfgabsorb.mfg import (adjoint_pairing, delta_U, delta_U_kernel, evaluate_U,
                           solve_linearized, solve_mfg, taylor_residual, toy_coupling,
                           zero_coupling)
from mfgabsorb.pde1d import Coefficients, Grid1D, solve_fp_forward, spatial_gradient
from mfgabsorb.toy_model import toy_fixed_point

QUAD = Coefficients(1.0, "quadratic")
TOY = toy_coupling()


@pytest.fixture(scope="module")
def base():
    g = Grid1D(101, 401, 0.0, 0.2)
    m0 = SubProbMeasure.uniform(101, 0.5)
    return solve_mfg(m0, TOY, g, QUAD, tol=1e-11, max_iter=400)


def test_decoupled_system():
    g = Grid1D(51, 101, 0.0, 0.2)
    m0 = SubProbMeasure.uniform(51, 1.0)
    sol = solve_mfg(m0, zero_coupling(), g, QUAD)
    assert sol.iterations == 1
    assert not sol.u.values.any()
    ref = solve_fp_forward(g, QUAD, None, m0).field.values
    np.testing.assert_array_equal(sol.m.values, ref)


def test_toy_zero_measure():
    g = Grid1D(51, 101, 0.0, 0.2)
    sol = solve_mfg(SubProbMeasure.zero(), TOY, g, QUAD)
    assert not sol.u.values.any() and not sol.m.values.any()


def test_toy_matches_series_small_grid():
    g = Grid1D(101, 401, 0.0, 0.2)
    m0 = SubProbMeasure.uniform(101, 1.0)
    sol = solve_mfg(m0, TOY, g, QUAD, tol=1e-10)
    toy = toy_fixed_point(m0, g)
    assert np.max(np.abs(sol.u.values[0] - toy.U_grid())) < 1e-5


def test_residuals_and_history(base):
    hist = base.residual_history
    assert hist[-1] <= 1e-11
    assert all(b <= a for a, b in zip(hist[2:], hist[3:]))
    assert not base.u.values[:, [0, -1]].any() and not base.m.values[:, [0, -1]].any()


def test_non_convergence_carries_history():
    g = Grid1D(51, 101, 0.0, 0.2)
    with pytest.raises(ConvergenceError) as info:
        solve_mfg(SubProbMeasure.uniform(51, 1.0), TOY, g, QUAD, tol=1e-14, max_iter=2)
    assert len(info.value.history) == 2


def test_damping_range():
    g = Grid1D(11, 11)
    with pytest.raises(PreconditionError):
        solve_mfg(SubProbMeasure.zero(), TOY, g, QUAD, damping=0.0)


def test_evaluate_U_boundary_and_terminal():
    g = Grid1D(51, 101, 0.0, 0.2)
    m0 = SubProbMeasure.uniform(51, 1.0)
    assert evaluate_U(0.0, m0, TOY, g, QUAD) == 0.0
    assert evaluate_U(1.0, m0, TOY, g, QUAD) == 0.0
    assert evaluate_U(0.5, SubProbMeasure.dirac(0.5), TOY, g, QUAD, t0=0.2) == \
        pytest.approx(0.0625, abs=1e-15)
    assert evaluate_U(0.3, SubProbMeasure.zero(), TOY, g, QUAD) == 0.0
    with pytest.raises(PreconditionError):
        evaluate_U(1.5, m0, TOY, g, QUAD)


def test_linearized_zero_and_homogeneous(base):
    n = base.grid.n_space
    lin0 = solve_linearized(base, TOY, np.zeros(n), QUAD)
    assert not lin0.v.values.any() and not lin0.mu.values.any()
    d = mollified_dirac(0.3, n)
    a = solve_linearized(base, TOY, d, QUAD, tol=1e-13)
    b = solve_linearized(base, TOY, 2 * d, QUAD, tol=1e-13)
    np.testing.assert_allclose(b.v.values, 2 * a.v.values, atol=1e-12, rtol=0)
    np.testing.assert_allclose(b.mu.values, 2 * a.mu.values, atol=1e-10, rtol=0)


def test_delta_U_matches_difference_quotient(base):
    g = base.grid
    m0 = base.m.values[0]
    d = mollified_dirac(0.5, g.n_space)
    v = delta_U(0.5, None, 0.5, TOY, g, QUAD, base=base, tol=1e-11)
    s = 0.025
    pert = solve_mfg(m0 + s * d, TOY, g, QUAD, tol=1e-11, max_iter=400)
    quotient = (pert.U(0.5) - base.U(0.5)) / s
    assert v == pytest.approx(quotient, rel=0.05)


def test_delta_U_boundary(base):
    g = base.grid
    assert delta_U(0.4, None, 0.0, TOY, g, QUAD, base=base) == 0.0
    assert delta_U(0.4, None, 1.0, TOY, g, QUAD, base=base) == 0.0
    assert delta_U(0.0, None, 0.4, TOY, g, QUAD, base=base) == 0.0
    assert delta_U(1.0, None, 0.4, TOY, g, QUAD, base=base) == 0.0


def test_intrinsic_derivative_finite_at_boundary(base):
    K = delta_U_kernel(base, TOY, QUAD, base.grid.x[:4], tol=1e-10)
    assert not K[0].any()
    dm = spatial_gradient(K, base.grid.dx, axis=0)
    assert np.all(np.isfinite(dm[0]))


def test_taylor_zero_for_equal_measures():
    g = Grid1D(51, 101, 0.0, 0.1)
    m = SubProbMeasure.uniform(51, 0.5)
    assert taylor_residual(m, m, TOY, g, QUAD, tol=1e-12) <= 1e-12


def test_taylor_wide_pair_finite():
    g = Grid1D(51, 101, 0.0, 0.1)
    m1, m2 = SubProbMeasure.uniform(51, 0.2), SubProbMeasure.uniform(51, 0.8)
    r = taylor_residual(m1, m2, TOY, g, QUAD, tol=1e-12, max_iter=400)
    C = r / flat_distance(m1, m2) ** 2
    assert np.isfinite(C) and C < 1.0


def test_lipschitz_in_measure():
    g = Grid1D(51, 201, 0.0, 0.2)
    m2 = SubProbMeasure.uniform(51, 0.5)
    U2 = solve_mfg(m2, TOY, g, QUAD, tol=1e-11).u.values[0]
    ratios = []
    for e in (0.4, 0.2, 0.1, 0.05, 0.025):
        m1 = SubProbMeasure.uniform(51, 0.5 + e)
        U1 = solve_mfg(m1, TOY, g, QUAD, tol=1e-11).u.values[0]
        ratios.append(np.max(np.abs(U1 - U2)) / flat_distance(m1, m2))
    assert max(ratios) < 2 * min(ratios)


def test_discrete_duality(base):
    g = base.grid
    defect = adjoint_pairing(base, QUAD, np.sin(np.pi * g.x))
    assert np.max(np.abs(defect)) <= g.dx ** 2 + g.dt


def test_solution_directory(tmp_path, base):
    import json

    base.to_directory(tmp_path / "sol", {"note": "x"})
    manifest = json.loads((tmp_path / "sol" / "manifest.json").read_text())
    assert manifest["iterations"] == base.iterations
    assert manifest["config"] == {"note": "x"}
