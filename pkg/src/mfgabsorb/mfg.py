"""MFG system with absorbing boundaries, the value U and its measure derivative.

``solve_mfg`` finds the pair (u, m) by damped Picard iteration on the
density flow.  ``solve_linearized`` solves the pure linearised system
around a converged pair; its backward component at time ``t0`` is
``<dU/dm(t0, x, m0, .), mu0>``.  Both linear steps are the exact
derivatives of the discrete nonlinear steps, so difference quotients of
the discrete U converge to the discrete derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError, PreconditionError
from .measures import (SubProbMeasure, flat_distance_rows, grid_project, moment,
                       mollified_dirac)
from .pde1d import (SpaceTimeField, hjb_gradient, implicit_diffusion, interface_values,
                    solve_fp_forward, solve_hjb_backward, spatial_gradient,
                    stencil_gradient, upwind_divergence)


@dataclass(frozen=True)
class CouplingSpec:
    """Running cost F(t, x, m), terminal cost G(x, m) and their derivatives.

    All callables are vectorised over ``x`` (and ``y`` for the derivatives,
    broadcasting ``x[:, None]`` against ``y[None, :]``).  ``None`` means the
    term is identically zero.
    """

    F: Optional[Callable] = None
    G: Optional[Callable] = None
    deltaF: Optional[Callable] = None
    deltaG: Optional[Callable] = None
    name: str = "custom"

    def running(self, t, x, m):
        if self.F is None:
            return np.zeros_like(x)
        return np.asarray(self.F(t, x, m), dtype=float)

    def terminal(self, x, m):
        if self.G is None:
            return np.zeros_like(x)
        return np.asarray(self.G(x, m), dtype=float)


def zero_coupling():
    return CouplingSpec(name="zero")


def toy_G(x, m):
    return x * (1.0 - x) * moment(m, lambda z: z * (1.0 - z))


def toy_deltaG(x, m, y):
    return x * (1.0 - x) * y * (1.0 - y)


def toy_coupling():
    """No running cost, ``G(x, m) = x(1-x) int z(1-z) dm``."""
    return CouplingSpec(G=toy_G, deltaG=toy_deltaG, name="toy")


def couplings():
    return {"toy": toy_coupling(), "zero": zero_coupling()}


@dataclass(frozen=True, eq=False)
class MFGSolution:
    u: SpaceTimeField
    m: SpaceTimeField
    mass: np.ndarray
    iterations: int
    u_residuals: list = field(default_factory=list)
    m_residuals: list = field(default_factory=list)

    @property
    def grid(self):
        return self.u.grid

    @property
    def residual_history(self):
        return [max(a, b) for a, b in zip(self.u_residuals, self.m_residuals)]

    def drift(self, coeff):
        """FP advection coefficient ``H_p(u_x)`` on the full grid."""
        return coeff.Hp(spatial_gradient(self.u.values, self.grid.dx))

    def measure(self, k):
        return SubProbMeasure.from_grid(self.m.values[k], self.grid.dx)

    def U(self, x):
        return _interp_dirichlet(x, self.grid.x, self.u.values[0])

    def to_directory(self, path, config=None):
        import json
        import os

        os.makedirs(path, exist_ok=True)
        self.u.to_csv(os.path.join(path, "u.csv"))
        self.m.to_csv(os.path.join(path, "m.csv"))
        manifest = {
            "iterations": self.iterations,
            "u_residuals": self.u_residuals,
            "m_residuals": self.m_residuals,
            "mass": self.mass.tolist(),
            "grid": self.grid.to_dict(),
            "config": config or {},
        }
        with open(os.path.join(path, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)


def _interp_dirichlet(x, nodes, values):
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x_arr < 0) or np.any(x_arr > 1):
        raise PreconditionError("x must lie in [0, 1]")
    out = np.interp(x_arr, nodes, values)
    out[(x_arr == 0.0) | (x_arr == 1.0)] = 0.0
    return out if np.ndim(x) else float(out[0])


def _initial_values(m0, grid):
    if isinstance(m0, SubProbMeasure):
        return np.array(grid_project(m0, grid.dx).values)
    vals = np.asarray(m0, dtype=float).copy()
    SubProbMeasure.from_grid(vals, grid.dx)  # validates
    return vals


def _stage_costs(coupling, grid, m_flow):
    x = grid.x
    dx = grid.dx
    F = None
    if coupling.F is not None:
        F = np.array([coupling.running(t, x, SubProbMeasure.from_grid(row, dx))
                      for t, row in zip(grid.t, m_flow)])
    G = coupling.terminal(x, SubProbMeasure.from_grid(m_flow[-1], dx))
    return F, G


def solve_mfg(m0, coupling, grid, coeff, damping=0.5, tol=1e-7, max_iter=200, t0=None):
    """Damped Picard iteration for the MFG system on ``[t0, T]``.

    Each sweep solves the HJB equation against the current density flow and
    the FP equation with advection ``H_p(u_x)``; the flow is then relaxed
    with weight ``damping``.  Stops once successive ``u`` differ by at most
    ``tol`` in sup norm and successive flows by at most ``tol`` in the
    sup-over-time flat distance.
    """
    if t0 is not None and t0 != grid.t0:
        grid = grid.with_t0(t0)
    if not 0.0 < damping <= 1.0:
        raise PreconditionError("damping must lie in (0, 1]")
    vals0 = _initial_values(m0, grid)
    fp = solve_fp_forward(grid, coeff, None, vals0)
    m_flow = fp.field.values
    u_prev = np.zeros((grid.n_time, grid.n_space))
    u_res, m_res = [], []
    for it in range(1, max_iter + 1):
        F, G = _stage_costs(coupling, grid, m_flow)
        u = solve_hjb_backward(grid, coeff, G, F).values
        drift = coeff.Hp(spatial_gradient(u, grid.dx))
        fp = solve_fp_forward(grid, coeff, drift, vals0)
        m_new = damping * fp.field.values + (1.0 - damping) * m_flow
        du = float(np.max(np.abs(u - u_prev)))
        dm = float(np.max(flat_distance_rows(m_new, m_flow, grid.dx)))
        u_res.append(du)
        m_res.append(dm)
        u_prev, m_flow = u, m_new
        if du <= tol and dm <= tol:
            break
    else:
        raise ConvergenceError(
            f"MFG fixed point not reached in {max_iter} iterations "
            f"(last residuals u={u_res[-1]:.3g}, m={m_res[-1]:.3g}); try a smaller damping",
            list(zip(u_res, m_res)))
    # report the flow generated by the final u, not the relaxed average
    F, G = _stage_costs(coupling, grid, m_flow)
    u = solve_hjb_backward(grid, coeff, G, F)
    fp = solve_fp_forward(grid, coeff, coeff.Hp(spatial_gradient(u.values, grid.dx)), vals0)
    return MFGSolution(u, fp.field, fp.mass, it, u_res, m_res)


def evaluate_U(x, m0, coupling, grid, coeff, t0=None, **solver_kw):
    """``U(t0, x, m0) = u(t0, x)``; exactly zero on the boundary."""
    t0 = grid.t0 if t0 is None else t0
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x_arr < 0) or np.any(x_arr > 1):
        raise PreconditionError("x must lie in [0, 1]")
    if t0 == grid.T:
        out = coupling.terminal(x_arr, m0)
        out[(x_arr == 0.0) | (x_arr == 1.0)] = 0.0
        return out if np.ndim(x) else float(out[0])
    sol = solve_mfg(m0, coupling, grid, coeff, t0=t0, **solver_kw)
    return sol.U(x)


# -- linearised system ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearizedSolution:
    v: SpaceTimeField
    mu: SpaceTimeField
    iterations: int
    residuals: list = field(default_factory=list)

    def v0(self, x):
        return _interp_dirichlet(x, self.v.grid.x, self.v.values[0])


def _pair_with_kernel(kernel_fn, x, m, y_nodes, mu_row, dx):
    # <kernel(x, m, .), mu> with trapezoid weights (mu vanishes at the ends)
    K = np.asarray(kernel_fn(x[:, None], m, y_nodes[None, :]), dtype=float)
    return K[:, 1:-1] @ mu_row[1:-1] * dx


def solve_linearized(base, coupling, mu0, coeff, damping=0.5, tol=1e-7, max_iter=200,
                     h=None, c=None, zT=None):
    """Linearised MFG system around ``base`` with ``mu(t0) = mu0``.

    Backward:  ``-v_t - a v_xx + H_p(u_x) v_x = <dF/dm(m(t)), mu(t)> + h``,
    ``v(T) = <dG/dm(m(T)), mu(T)> + zT``.
    Forward:   ``mu_t - a mu_xx - (mu H_p(u_x))_x - (m H_pp(u_x) v_x + c)_x = 0``.

    ``mu0`` is a signed array of grid values (or a SubProbMeasure).  The
    optional data ``h`` (space-time), ``c`` (space-time flux) and ``zT``
    default to zero, which is the pure system.
    """
    grid = base.grid
    x, dx, dt, a = grid.x, grid.dx, grid.dt, coeff.a
    if isinstance(mu0, SubProbMeasure):
        mu0 = grid_project(mu0, dx).values
    mu0 = np.asarray(mu0, dtype=float).copy()
    if mu0.shape != (grid.n_space,):
        raise PreconditionError("mu0 has the wrong length")
    mu0[0] = mu0[-1] = 0.0
    if coupling.deltaG is None and coupling.G is not None:
        raise PreconditionError("coupling needs deltaG for the linearised system")
    if coupling.deltaF is None and coupling.F is not None:
        raise PreconditionError("coupling needs deltaF for the linearised system")

    u, m = base.u.values, base.m.values
    ux = spatial_gradient(u, dx)
    bh = interface_values(coeff.Hp(ux))
    hpp = coeff.Hpp(ux)
    modes = [hjb_gradient(u[n + 1], dx, a) for n in range(grid.n_time - 1)]
    solver = implicit_diffusion(grid.n_space, dt * a / dx ** 2)
    measures = [SubProbMeasure.from_grid(row, dx) for row in m] if (
        coupling.deltaF is not None or coupling.deltaG is not None) else None
    h_arr = np.zeros_like(u) if h is None else np.asarray(h, dtype=float)
    c_arr = None if c is None else np.asarray(c, dtype=float)
    zT_arr = np.zeros(grid.n_space) if zT is None else np.asarray(zT, dtype=float)

    def forward(v):
        mu = np.zeros_like(m)
        mu[0] = mu0
        vx = spatial_gradient(v, dx)
        dbh = interface_values(hpp * vx)
        for n in range(grid.n_time - 1):
            rhs = mu[n, 1:-1] + dt * (upwind_divergence(mu[n], bh[n], bh[n], dx)
                                      + upwind_divergence(m[n], dbh[n], bh[n], dx))
            if c_arr is not None:
                ch = interface_values(c_arr[n])
                rhs += dt * (ch[1:] - ch[:-1]) / dx
            mu[n + 1, 1:-1] = solver.solve(rhs)
        return mu

    def backward(mu):
        v = np.zeros_like(u)
        term = zT_arr.copy()
        if coupling.deltaG is not None:
            term += _pair_with_kernel(coupling.deltaG, x, measures[-1], x, mu[-1], dx)
        term[0] = term[-1] = 0.0
        v[-1] = term
        for n in range(grid.n_time - 2, -1, -1):
            rhs = v[n + 1, 1:-1] + dt * h_arr[n, 1:-1]
            if coupling.deltaF is not None:
                t = grid.t[n]
                src = _pair_with_kernel(lambda xx, mm, yy: coupling.deltaF(t, xx, mm, yy),
                                        x, measures[n], x, mu[n], dx)
                rhs += dt * src[1:-1]
            if coeff.hamiltonian != "none":
                p, mode = modes[n]
                rhs -= dt * coeff.Hp(p) * stencil_gradient(v[n + 1], dx, mode)
            v[n, 1:-1] = solver.solve(rhs)
        return v

    mu = forward(np.zeros_like(u))
    v_prev = np.zeros_like(u)
    res = []
    for it in range(1, max_iter + 1):
        v = backward(mu)
        mu_new = damping * forward(v) + (1.0 - damping) * mu
        dv = float(np.max(np.abs(v - v_prev)))
        dmu = float(np.max(flat_distance_rows(mu_new, mu, dx)))
        res.append((dv, dmu))
        v_prev, mu = v, mu_new
        if dv <= tol and dmu <= tol:
            break
    else:
        raise ConvergenceError(f"linearised system not converged in {max_iter} iterations", res)
    v = backward(mu)
    mu = forward(v)
    return LinearizedSolution(SpaceTimeField(v, grid), SpaceTimeField(mu, grid), it, res)


def delta_U(x, m0, y, coupling, grid, coeff, base=None, **solver_kw):
    """Linear functional derivative ``dU/dm(t0, x, m0, y)``.

    Uses a unit hat of width ``2 dx`` at ``y`` as initial datum of the pure
    linearised system.  Exactly zero when ``x`` or ``y`` is on the boundary.
    Pass a converged ``base`` to skip the MFG solve.
    """
    if not 0.0 <= y <= 1.0:
        raise PreconditionError("y must lie in [0, 1]")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if y in (0.0, 1.0):
        out = np.zeros_like(x_arr)
        return out if np.ndim(x) else 0.0
    if base is None:
        base = solve_mfg(m0, coupling, grid, coeff, **solver_kw)
    lin = solve_linearized(base, coupling, mollified_dirac(y, base.grid.n_space), coeff,
                           **solver_kw)
    return lin.v0(x)


def delta_U_kernel(base, coupling, coeff, y_nodes=None, **solver_kw):
    """``dU/dm(t0, x_i, m0, y_j)`` for all grid nodes ``x_i`` and the given ``y_j``.

    Returns an array of shape ``(len(y_nodes), n_space)``.
    """
    grid = base.grid
    y_nodes = grid.x if y_nodes is None else np.asarray(y_nodes, dtype=float)
    out = np.zeros((y_nodes.size, grid.n_space))
    for j, y in enumerate(y_nodes):
        if 0.0 < y < 1.0:
            lin = solve_linearized(base, coupling, mollified_dirac(y, grid.n_space), coeff,
                                   **solver_kw)
            out[j] = lin.v.values[0]
    return out


def taylor_residual(m01, m02, coupling, grid, coeff, **solver_kw):
    """``sup_x |U(m01) - U(m02) - v|`` with ``v`` linearised at ``m02``
    in the direction ``m01 - m02``."""
    s1 = solve_mfg(m01, coupling, grid, coeff, **solver_kw)
    s2 = solve_mfg(m02, coupling, grid, coeff, **solver_kw)
    mu0 = _initial_values(m01, grid) - _initial_values(m02, grid)
    lin = solve_linearized(s2, coupling, mu0, coeff, **solver_kw)
    return float(np.max(np.abs(s1.u.values[0] - s2.u.values[0] - lin.v.values[0])))


def adjoint_pairing(sol, coeff, phi_T):
    """Duality defect of the FP flow against the adjoint equation.

    Solves ``-phi_t - a phi_xx + H_p(u_x) phi_x = 0`` backward from
    ``phi_T`` with the HJB stencils and returns the time series
    ``<m(t_k), phi(t_k)> - <m(t0), phi(t0)>``.
    """
    grid = sol.grid
    dx, dt, a = grid.dx, grid.dt, coeff.a
    b = coeff.Hp(spatial_gradient(sol.u.values, dx))
    solver = implicit_diffusion(grid.n_space, dt * a / dx ** 2)
    phi = np.zeros_like(sol.u.values)
    phi[-1] = np.asarray(phi_T, dtype=float)
    phi[-1, 0] = phi[-1, -1] = 0.0
    for n in range(grid.n_time - 2, -1, -1):
        rhs = phi[n + 1, 1:-1] - dt * b[n + 1, 1:-1] * stencil_gradient(
            phi[n + 1], dx, np.zeros(grid.n_space - 2, dtype=np.int8))
        phi[n, 1:-1] = solver.solve(rhs)
    pair = (sol.m.values[:, 1:-1] * phi[:, 1:-1]).sum(axis=1) * dx
    return pair - pair[0]
