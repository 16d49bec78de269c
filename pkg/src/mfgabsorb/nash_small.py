"""Two-player Nash system on the unit square and the Master-Equation projections.

Player 1 solves

    -d_t v1 - a (d_11 + d_22) v1 + H(d_1 v1) + H_p(d_2 v2) d_2 v1 = F(t, x1, m^{2,1})

with ``v1 = 0`` on ``x1 in {0, 1}`` and ``v1(T) = G(x1, m^{2,1})`` where
``m^{2,1} = delta_{x2}`` if ``x2`` is interior and the zero measure
otherwise.  On the slices ``x2 in {0, 1}`` the opponent has left, the
cross term drops and ``v1`` solves the one-player HJB equation with the
zero measure; those slices are solved in 1-D and imposed.

Both players are advanced by one routine written in the player's own frame
(own coordinate first), so for symmetric data ``v2`` is the exact
transpose of ``v1``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import CFLError, PreconditionError
from .measures import SubProbMeasure
from .pde1d import Grid1D, implicit_diffusion, solve_hjb_backward, spatial_gradient


def _co_player_measures(x):
    out = []
    for xj in x:
        if 0.0 < xj < 1.0:
            out.append(SubProbMeasure.dirac(xj))
        else:
            out.append(SubProbMeasure.zero())
    return out


def _stage_tables(coupling, grid):
    """``F`` per time and ``G`` in the own frame ``[own node, other node]``."""
    x = grid.x
    ms = _co_player_measures(x)
    G = np.stack([coupling.terminal(x, m) for m in ms], axis=1)
    G[0, :] = G[-1, :] = 0.0
    F = None
    if coupling.F is not None:
        F = np.stack([np.stack([coupling.running(t, x, m) for m in ms], axis=1)
                      for t in grid.t])
    return F, G


def _own_gradient(P, dx, a):
    # centred along axis 0 with the upwind fallback of the 1-D HJB scheme
    back = (P[1:-1] - P[:-2]) / dx
    fwd = (P[2:] - P[1:-1]) / dx
    p = 0.5 * (back + fwd)
    steep = np.abs(p) * dx / (2.0 * a) > 1.0
    if np.any(steep):
        p = np.where(steep, np.where(p > 0, back, fwd), p)
    return p


def _cross_gradient(P, dx):
    return (P[:, 2:] - P[:, :-2]) / (2.0 * dx)


@dataclass(frozen=True, eq=False)
class NashSolution2:
    """Values ``v1[k, i1, i2]`` and ``v2[k, i1, i2]`` on the product grid."""

    v1: np.ndarray
    v2: np.ndarray
    grid: Grid1D
    boundary_slice: np.ndarray

    def at_t0(self, player=1):
        return (self.v1 if player == 1 else self.v2)[0]

    def to_directory(self, path):
        os.makedirs(path, exist_ok=True)
        for k in range(self.grid.n_time):
            np.savetxt(os.path.join(path, f"v1_{k:05d}.csv"), self.v1[k], delimiter=",",
                       fmt="%.17g")
            np.savetxt(os.path.join(path, f"v2_{k:05d}.csv"), self.v2[k], delimiter=",",
                       fmt="%.17g")
        with open(os.path.join(path, "manifest.json"), "w") as fh:
            json.dump({"grid": self.grid.to_dict(),
                       "boundary_slice_t0": self.boundary_slice[0].tolist()},
                      fh, indent=2, sort_keys=True)


def solve_nash_two_player(coupling, grid, coeff):
    """Backward IMEX march of the two-player Nash system.

    Diffusion is split into implicit tridiagonal sweeps along each axis;
    the Hamiltonian and the cross term use the values of the previous
    (later) time level.
    """
    n, dx, dt, a = grid.n_space, grid.dx, grid.dt, coeff.a
    F, G = _stage_tables(coupling, grid)
    zero = SubProbMeasure.zero()
    src = None
    if coupling.F is not None:
        src = np.array([coupling.running(t, grid.x, zero) for t in grid.t])
    slice_sol = solve_hjb_backward(grid, coeff, coupling.terminal(grid.x, zero), src).values
    r = dt * a / dx ** 2
    solver = implicit_diffusion(n, r)

    P = np.empty((grid.n_time, n, n))
    P[-1] = G
    P[-1, :, 0] = slice_sol[-1]
    P[-1, :, -1] = slice_sol[-1]
    for k in range(grid.n_time - 2, -1, -1):
        P[k] = _step(P[k + 1], P[k + 1].T, None if F is None else F[k], slice_sol[k],
                     coeff, dx, dt, a, r, solver)
    v1 = P
    v2 = np.transpose(P, (0, 2, 1)).copy()
    return NashSolution2(v1, v2, grid, slice_sol)


def _step(P, Q, Fk, slice_k, coeff, dx, dt, a, r, solver):
    """One backward step for the player whose own frame is ``P``.

    ``Q`` is the opponent's value in the opponent's own frame.
    """
    n = P.shape[0]
    own = P[:, 1:-1]                              # interior other-coordinate lines
    p1 = _own_gradient(own, dx, a)                # d_own P, shape (n-2, n-2)
    # opponent's own gradient, moved to this frame: d_other Q at (own, other)
    q = spatial_gradient(Q, dx, axis=0).T[1:-1, 1:-1]
    b = coeff.Hp(q)
    cfl = np.max(np.abs(b)) * dt / dx if b.size else 0.0
    if cfl > 1.0:
        raise CFLError(f"cross-term CFL number {cfl:.3g} > 1; reduce dt")
    cross = b * _cross_gradient(P, dx)[1:-1]
    rhs = own[1:-1] - dt * (coeff.H(p1) + cross)
    if Fk is not None:
        rhs = rhs + dt * Fk[1:-1, 1:-1]
    # sweep along the own axis (Dirichlet zero at own = 0, 1)
    half = solver.solve(rhs)
    # sweep along the other axis with the reduced slices as Dirichlet data
    rhs2 = half.T.copy()
    rhs2[0] += r * slice_k[1:-1]
    rhs2[-1] += r * slice_k[1:-1]
    full = solver.solve(rhs2).T
    out = np.zeros((n, n))
    out[1:-1, 1:-1] = full
    out[:, 0] = slice_k
    out[:, -1] = slice_k
    out[0, :] = out[-1, :] = 0.0
    return out


@dataclass(frozen=True, eq=False)
class Projection2:
    """``u_i(t, x) = U(t, x_i, m^{2,i}_x)`` at the listed time indices."""

    u1: np.ndarray
    u2: np.ndarray
    grid: Grid1D
    time_index: tuple
    solutions: tuple = ()


def build_projection(coupling, grid, coeff, time_index=(0,), keep_solutions=False, **solver_kw):
    """One MFG solve per co-player node and start time.

    Column ``j`` of ``u1[k]`` is ``U(t_k, ., delta_{x_j})`` for interior
    ``x_j`` and ``U(t_k, ., 0)`` on the boundary columns.
    """
    from .mfg import solve_mfg

    n = grid.n_space
    tables, sols = [], []
    for k in time_index:
        if not 0 <= k < grid.n_time - 1:
            raise PreconditionError("projection start times must precede T")
        sub = Grid1D(n, grid.n_time - k, grid.t[k], grid.T)
        cols, row_sols = [], []
        for m in _co_player_measures(grid.x):
            s = solve_mfg(m, coupling, sub, coeff, **solver_kw)
            cols.append(s.u.values[0])
            row_sols.append(s)
        tables.append(np.stack(cols, axis=1))
        sols.append(tuple(row_sols))
    u1 = np.array(tables)
    u2 = np.transpose(u1, (0, 2, 1)).copy()
    return Projection2(u1, u2, grid, tuple(time_index), tuple(sols) if keep_solutions else ())


def projection_gap(nash, proj, k=0):
    """``max |v1(t_k) - u1(t_k)|`` over the product grid."""
    if nash.grid != proj.grid:
        raise PreconditionError("grid mismatch between Nash solution and projection")
    if k not in proj.time_index:
        raise PreconditionError(f"projection not available at time index {k}")
    return float(np.max(np.abs(nash.v1[k] - proj.u1[proj.time_index.index(k)])))


def nash_residual(proj, coupling, coeff, k=0, **solver_kw):
    """Sup of the two-player Nash operator applied to the projection at ``t_k``.

    ``d_{x2} u1`` is the intrinsic derivative ``d/dy dU/dm(t, x1, delta_{x2}, y)``
    at ``y = x2``; the time derivative and the remaining space derivatives
    are finite differences.  Needs the projection at ``t_k`` and ``t_{k+1}``
    built with ``keep_solutions=True``.
    """
    from .mfg import solve_linearized
    from .measures import mollified_dirac

    grid = proj.grid
    if k not in proj.time_index or k + 1 not in proj.time_index or not proj.solutions:
        raise PreconditionError("nash_residual needs projections at t_k and t_k+1 with solutions")
    if coupling.G is not None and coupling.deltaG is None:
        raise PreconditionError("coupling needs deltaG for the intrinsic derivative")
    n, dx, a = grid.n_space, grid.dx, coeff.a
    i0, i1 = proj.time_index.index(k), proj.time_index.index(k + 1)
    u, u_next = proj.u1[i0], proj.u1[i1]
    dt = grid.t[k + 1] - grid.t[k]
    ut = (u_next - u) / dt
    d11 = (u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / dx ** 2
    d22 = (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / dx ** 2
    d1 = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * dx)
    # opponent's own gradient d_{x2} u2 (ordinary derivative in its own slot)
    d2u2 = spatial_gradient(proj.u2[i0], dx, axis=1)[1:-1, 1:-1]
    # intrinsic derivative: D_m U(t, x1, delta_{x2}, x2), two linearised solves per y node
    dmu = np.zeros((n - 2, n - 2))
    for j in range(1, n - 1):
        base = proj.solutions[i0][j]
        vals = []
        for y in (grid.x[j - 1], grid.x[j + 1]):
            if y in (0.0, 1.0):
                vals.append(np.zeros(n))
            else:
                lin = solve_linearized(base, coupling, mollified_dirac(y, n), coeff, **solver_kw)
                vals.append(lin.v.values[0])
        dmu[:, j - 1] = ((vals[1] - vals[0]) / (2 * dx))[1:-1]
    F = 0.0
    if coupling.F is not None:
        ms = _co_player_measures(grid.x)
        F = np.stack([coupling.running(grid.t[k], grid.x, m) for m in ms], axis=1)[1:-1, 1:-1]
    res = -ut[1:-1, 1:-1] - a * (d11 + d22) + coeff.H(d1) + coeff.Hp(d2u2) * dmu - F
    return float(np.max(np.abs(res)))


def slice_identity_defect(nash, coupling, coeff):
    """How far the imposed slices are from the reduced HJB solve and from each other."""
    grid = nash.grid
    zero = SubProbMeasure.zero()
    src = None
    if coupling.F is not None:
        src = np.array([coupling.running(t, grid.x, zero) for t in grid.t])
    ref = solve_hjb_backward(grid, coeff, coupling.terminal(grid.x, zero), src).values
    lo, hi = nash.v1[:, :, 0], nash.v1[:, :, -1]
    return float(max(np.max(np.abs(lo - hi)), np.max(np.abs(lo - ref))))


def exchangeability_defect(nash):
    return float(np.max(np.abs(nash.v1 - np.transpose(nash.v2, (0, 2, 1)))))


def w_average(nash, m0, seed=0, n_samples=4000, k=0):
    """Monte-Carlo ``w(t_k, x1, m0) = E[v1(t_k, x1, X2)]`` with ``X2 ~ m0``.

    The co-player is absorbed at the start with probability ``1 - mass(m0)``
    (then ``v1`` is read on the boundary slice).  Returns values on the
    ``x1`` grid and the Monte-Carlo standard errors.
    """
    from .particles import sample_initial

    grid = nash.grid
    pos, active = sample_initial(m0, n_samples, seed)
    V = nash.v1[k]
    x2 = np.where(active, pos, 0.0)
    j = np.clip((x2 / grid.dx).astype(int), 0, grid.n_space - 2)
    w = x2 / grid.dx - j
    cols = V[:, j] * (1.0 - w) + V[:, j + 1] * w
    return cols.mean(axis=1), cols.std(axis=1, ddof=1) / np.sqrt(n_samples)
