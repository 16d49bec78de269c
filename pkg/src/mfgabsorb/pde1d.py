"""Finite-difference kernels on [0, 1] with homogeneous Dirichlet data.

Time stepping is implicit in the diffusion (one tridiagonal solve per step)
and explicit in the first-order terms.  Conventions, with ``a = sigma**2``:

* HJB, marched backward:  ``-u_t - a u_xx + H(u_x) = F``
* Fokker-Planck, forward: ``m_t = a m_xx + (m b)_x`` where ``b`` is the
  advection coefficient ``H_p(u_x)``; particles move with velocity ``-b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import CFLError, PreconditionError
from .measures import SubProbMeasure, grid_project


@dataclass(frozen=True)
class Grid1D:
    n_space: int
    n_time: int
    t0: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        if self.n_space < 3 or self.n_time < 2:
            raise PreconditionError("need n_space >= 3 and n_time >= 2")
        if not self.T > self.t0:
            raise PreconditionError("need T > t0")

    @property
    def dx(self):
        return 1.0 / (self.n_space - 1)

    @property
    def dt(self):
        return (self.T - self.t0) / (self.n_time - 1)

    @property
    def x(self):
        return np.linspace(0.0, 1.0, self.n_space)

    @property
    def t(self):
        return np.linspace(self.t0, self.T, self.n_time)

    def with_t0(self, t0):
        """Same node counts on the horizon ``[t0, T]``."""
        return Grid1D(self.n_space, self.n_time, t0, self.T)

    def to_dict(self):
        return {"n_space": self.n_space, "n_time": self.n_time, "t0": self.t0, "T": self.T}


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Scalar values on a (time, space) grid; ``values[k, i] ~ f(t_k, x_i)``."""

    values: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_time, self.grid.n_space):
            raise PreconditionError(f"field shape {v.shape} does not match grid")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("field has non-finite entries")
        object.__setattr__(self, "values", v)

    def __getitem__(self, k):
        return self.values[k]

    def at(self, k, x):
        """Linear interpolation in space of time slice ``k``."""
        return np.interp(x, self.grid.x, self.values[k])

    def to_csv(self, path):
        header = json.dumps(self.grid.to_dict(), sort_keys=True)
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g", header=header, comments="# ")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline()
        meta = json.loads(header.lstrip("#").strip())
        vals = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls(vals, Grid1D(**meta))


@dataclass(frozen=True)
class Coefficients:
    """Constant diffusion scale and a choice of Hamiltonian.

    ``hamiltonian`` is one of ``"quadratic"`` (``H = p**2 / 2``),
    ``"linear"`` (``H = b * p``) or ``"none"``.
    """

    sigma: float = 1.0
    hamiltonian: str = "quadratic"
    b: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise PreconditionError("sigma must be positive")
        if self.hamiltonian not in ("quadratic", "linear", "none"):
            raise PreconditionError(f"unknown hamiltonian {self.hamiltonian!r}")

    @property
    def a(self):
        return self.sigma ** 2

    def H(self, p):
        if self.hamiltonian == "quadratic":
            return 0.5 * p * p
        if self.hamiltonian == "linear":
            return self.b * p
        return np.zeros_like(p)

    def Hp(self, p):
        if self.hamiltonian == "quadratic":
            return np.array(p, dtype=float, copy=True)
        if self.hamiltonian == "linear":
            return np.full_like(p, self.b, dtype=float)
        return np.zeros_like(p, dtype=float)

    def Hpp(self, p):
        if self.hamiltonian == "quadratic":
            return np.ones_like(p, dtype=float)
        return np.zeros_like(p, dtype=float)


class TridiagonalSolver:
    """LU-factored constant tridiagonal matrix (LAPACK ``gttrf``/``gttrs``)."""

    def __init__(self, lower, diag, upper):
        lower = np.asarray(lower, dtype=float)
        diag = np.asarray(diag, dtype=float)
        upper = np.asarray(upper, dtype=float)
        off = np.zeros_like(diag)
        off[1:] += np.abs(lower)
        off[:-1] += np.abs(upper)
        if np.any(np.abs(diag) < off):
            raise PreconditionError("tridiagonal matrix is not diagonally dominant")
        self.n = diag.size
        self._lu = lapack.dgttrf(lower, diag, upper)
        if self._lu[-1] != 0:
            raise PreconditionError("tridiagonal factorisation broke down")

    def solve(self, rhs):
        dl, d, du, du2, ipiv, _ = self._lu
        x, info = lapack.dgttrs(dl, d, du, du2, ipiv, rhs)
        if info != 0:
            raise PreconditionError("tridiagonal solve failed")
        return x


def implicit_diffusion(n_space, r):
    """Solver for ``(I - r D2)`` acting on the interior nodes (Dirichlet ends)."""
    n = n_space - 2
    return TridiagonalSolver(np.full(n - 1, -r), np.full(n, 1.0 + 2.0 * r), np.full(n - 1, -r))


def spatial_gradient(values, dx, axis=-1):
    """Centred differences inside, second-order one-sided at the two ends."""
    values = np.asarray(values, dtype=float)
    if values.shape[axis] < 3:
        raise PreconditionError("spatial_gradient needs at least three nodes")
    return np.gradient(values, dx, axis=axis, edge_order=2)


def _as_space_time(f, grid, name):
    """Evaluate ``f`` on the full grid: accepts None, a callable ``f(t, x)``,
    an ``(n_time, n_space)`` array, a single ``(n_space,)`` profile or a scalar."""
    shape = (grid.n_time, grid.n_space)
    if f is None:
        return np.zeros(shape)
    if callable(f):
        x = grid.x
        return np.array([np.broadcast_to(f(t, x), x.shape) for t in grid.t], dtype=float)
    arr = np.asarray(f, dtype=float)
    if arr.shape == shape:
        return arr
    if arr.ndim == 0 or arr.shape == (grid.n_space,):
        return np.broadcast_to(arr, shape).copy()
    raise PreconditionError(f"{name} has shape {arr.shape}, expected {shape}")


def hjb_gradient(row, dx, a):
    """Gradient fed to the Hamiltonian at interior nodes.

    Centred difference, replaced by the upwind one-sided difference where
    the cell Peclet number ``|p| dx / (2a)`` exceeds one.  Returns the
    gradient and the per-node stencil choice (0 centred, -1 backward,
    +1 forward) so linearisations can reuse it.
    """
    back = (row[1:-1] - row[:-2]) / dx
    fwd = (row[2:] - row[1:-1]) / dx
    p = 0.5 * (back + fwd)
    mode = np.zeros(p.size, dtype=np.int8)
    steep = np.abs(p) * dx / (2.0 * a) > 1.0
    if np.any(steep):
        mode[steep & (p > 0)] = -1
        mode[steep & (p <= 0)] = 1
        p = np.where(mode == -1, back, np.where(mode == 1, fwd, p))
    return p, mode


def stencil_gradient(row, dx, mode):
    back = (row[1:-1] - row[:-2]) / dx
    fwd = (row[2:] - row[1:-1]) / dx
    return np.where(mode == -1, back, np.where(mode == 1, fwd, 0.5 * (back + fwd)))


def solve_hjb_backward(grid, coeff, terminal, source=None):
    """March ``-u_t - a u_xx + H(u_x) = F`` backward from ``u(T) = terminal``.

    ``terminal`` is an array over the nodes or a callable of ``x``; it must
    vanish at both endpoints.  ``source`` follows :func:`_as_space_time`.
    """
    x = grid.x
    term = np.asarray(terminal(x) if callable(terminal) else terminal, dtype=float).copy()
    if term.shape != x.shape:
        raise PreconditionError("terminal datum has the wrong length")
    if abs(term[0]) > 1e-12 or abs(term[-1]) > 1e-12:
        raise PreconditionError("terminal datum must vanish at both endpoints")
    term[0] = term[-1] = 0.0
    F = _as_space_time(source, grid, "source")
    dt, dx, a = grid.dt, grid.dx, coeff.a
    solver = implicit_diffusion(grid.n_space, dt * a / dx ** 2)
    u = np.zeros((grid.n_time, grid.n_space))
    u[-1] = term
    for n in range(grid.n_time - 2, -1, -1):
        rhs = u[n + 1, 1:-1] + dt * F[n, 1:-1]
        if coeff.hamiltonian != "none":
            p, _ = hjb_gradient(u[n + 1], dx, a)
            rhs -= dt * coeff.H(p)
        u[n, 1:-1] = solver.solve(rhs)
    return SpaceTimeField(u, grid)


def interface_values(b):
    return 0.5 * (b[..., 1:] + b[..., :-1])


def upwind_divergence(m, bh, ref, dx):
    """``(m b)_x`` at interior nodes with the flux ``bh * m_upwind``.

    ``bh`` holds interface coefficients; the upwind node is picked from the
    sign of ``ref`` (the base-state interface coefficients), so the map is
    linear in both ``m`` and ``bh`` for a fixed ``ref``.
    """
    m_up = np.where(ref > 0, m[1:], m[:-1])
    flux = bh * m_up
    return (flux[1:] - flux[:-1]) / dx


def advection_cfl(bh, dt, dx):
    """Largest explicit outflow fraction over the interior nodes."""
    out = np.maximum(-bh[1:], 0.0) + np.maximum(bh[:-1], 0.0)
    return float(out.max() * dt / dx) if out.size else 0.0


@dataclass(frozen=True, eq=False)
class FPResult:
    field: SpaceTimeField
    mass: np.ndarray

    def __iter__(self):
        return iter((self.field, self.mass))


def _initial_density(m0, grid):
    if isinstance(m0, SubProbMeasure):
        return np.array(grid_project(m0, grid.dx).values, dtype=float)
    vals = np.asarray(m0, dtype=float).copy()
    if vals.shape != (grid.n_space,):
        raise PreconditionError("initial density has the wrong length")
    return vals


def solve_fp_forward(grid, coeff, drift, m0, source=None):
    """Forward Fokker-Planck ``m_t = a m_xx + (m drift)_x`` with absorption.

    ``drift`` is the advection coefficient ``H_p(u_x)`` (particles move with
    velocity ``-drift``).  Step ``k -> k+1`` uses ``drift[k]``.  ``source``
    optionally adds an explicit interior term per step (an
    ``(n_time, n_space - 2)`` array, used by the linearised system).
    Returns the field and the per-step trapezoid mass.
    """
    b = _as_space_time(drift, grid, "drift")
    m = np.zeros((grid.n_time, grid.n_space))
    m[0] = _initial_density(m0, grid)
    m[0, 0] = m[0, -1] = 0.0
    dt, dx = grid.dt, grid.dx
    bh = interface_values(b)
    cfl = max(advection_cfl(row, dt, dx) for row in bh)
    if cfl > 1.0:
        raise CFLError(f"advection CFL number {cfl:.3g} > 1; reduce dt below {dt / cfl:.3g}")
    solver = implicit_diffusion(grid.n_space, dt * coeff.a / dx ** 2)
    for n in range(grid.n_time - 1):
        rhs = m[n, 1:-1] + dt * upwind_divergence(m[n], bh[n], bh[n], dx)
        if source is not None:
            rhs += dt * source[n]
        m[n + 1, 1:-1] = solver.solve(rhs)
    mass = m[:, 1:-1].sum(axis=1) * dx
    return FPResult(SpaceTimeField(m, grid), mass)


def cole_hopf(u):
    """``w = exp(-u / 2)`` pointwise."""
    return SpaceTimeField(np.exp(-0.5 * u.values), u.grid)


def inverse_cole_hopf(w):
    """``u = -2 log w``; requires ``w > 0``."""
    if np.any(w.values <= 0):
        raise PreconditionError("transform domain violated: w must be positive")
    return SpaceTimeField(-2.0 * np.log(w.values), w.grid)
