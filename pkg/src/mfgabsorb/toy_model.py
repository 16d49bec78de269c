"""Closed-form machinery for the optimal-liquidation toy model.

Setting: sigma = 1, ``H(p) = p**2 / 2``, no running cost and terminal cost
``G(x, m) = x (1 - x) c(m)`` with ``c(m) = int z (1 - z) dm(z)``.  The
substitution ``w = exp(-u / 2)`` turns the HJB equation into the backward
heat equation with ``w = 1`` on the boundary, so

    U(t, x) = -2 log(1 + sum_k b_k exp(-k^2 pi^2 (T - t)) sin(k pi x))

with ``b_k = 2 int_0^1 (exp(-y (1 - y) c / 2) - 1) sin(k pi y) dy``.

The ``- 1`` inside ``b_k`` matters: the sine series expands ``w - 1``,
which vanishes at both endpoints.  Dropping it (``literal=True``) expands
``w`` itself and the representation misses the terminal condition by a
wide margin; the flag only exists to demonstrate that.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .errors import ConvergenceError, PreconditionError
from .measures import SubProbMeasure, moment
from .pde1d import Coefficients, Grid1D, SpaceTimeField, solve_fp_forward


def bump(z):
    return z * (1.0 - z)


def terminal_cost(x, c):
    return bump(np.asarray(x, dtype=float)) * c


def sine_coefficients(c, K, literal=False, n_quad=None):
    """First ``K`` sine coefficients of ``w(T, .) - 1`` by composite Simpson."""
    if c < 0 or K < 1:
        raise PreconditionError("need c >= 0 and K >= 1")
    if n_quad is None:
        n_quad = max(2049, 64 * K + 1)
    if n_quad % 2 == 0:
        n_quad += 1
    y = np.linspace(0.0, 1.0, n_quad)
    g = np.exp(-0.5 * bump(y) * c)
    if not literal:
        g = g - 1.0
    k = np.arange(1, K + 1)[:, None]
    return 2.0 * simpson(g[None, :] * np.sin(k * np.pi * y[None, :]), x=y, axis=1)


def _modes(b, t, T):
    b = np.asarray(b, dtype=float)
    k = np.arange(1, b.size + 1)
    tau = np.maximum(T - np.atleast_1d(np.asarray(t, dtype=float)), 0.0)
    return b[None, :] * np.exp(-(k[None, :] * np.pi) ** 2 * tau[:, None]), k


def heat_series(b, t, x, T):
    """``w(t, x)`` and ``w_x(t, x)`` for one or several times (rows)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    amp, k = _modes(b, t, T)
    arg = k[:, None] * np.pi * x[None, :]
    w = 1.0 + amp @ np.sin(arg)
    wx = (amp * (k * np.pi)[None, :]) @ np.cos(arg)
    return w, wx


def series_U(c, t, x, K=200, T=1.0, literal=False, coefficients=None):
    """Toy value function from the truncated sine series.

    Vectorised over ``x``; ``t`` scalar.  Endpoints return exactly zero.
    """
    b = sine_coefficients(c, K, literal) if coefficients is None else coefficients
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    w, _ = heat_series(b, t, x_arr, T)
    w = w[0]
    if np.any(w <= 0):
        raise PreconditionError("series truncation too aggressive: 1 + sum <= 0 (increase K)")
    u = -2.0 * np.log(w)
    u[(x_arr == 0.0) | (x_arr == 1.0)] = 0.0
    return u if np.ndim(x) else float(u[0])


def series_drift(b, grid):
    """``u_x`` on the full grid from term-wise differentiation of the series."""
    w, wx = heat_series(b, grid.t, grid.x, grid.T)
    if np.any(w <= 0):
        raise PreconditionError("series truncation too aggressive: 1 + sum <= 0 (increase K)")
    return -2.0 * wx / w


@dataclass(frozen=True, eq=False)
class ToySolution:
    c_star: float
    coefficients: np.ndarray
    K: int
    t0: float
    T: float
    m_flow: SpaceTimeField
    history: list = field(default_factory=list)
    method: str = "damped"

    def U(self, t, x):
        return series_U(self.c_star, t, x, self.K, self.T, coefficients=self.coefficients)

    def U_grid(self):
        """``U(t0, .)`` on the grid, returned as a node array."""
        return self.U(self.t0, self.m_flow.grid.x)


class ToyFixedPoint:
    """The scalar map ``c -> c'(c)`` on a given FP grid.

    Evaluating the map builds ``u`` from the series, runs the FP equation
    with the analytic drift and integrates ``z (1 - z)`` against ``m(T)``.
    """

    def __init__(self, m0, grid, K=200):
        self.m0 = m0
        self.grid = grid
        self.K = K
        self.coeff = Coefficients(1.0, "quadratic")
        self.calls = 0

    def flow(self, c):
        b = sine_coefficients(c, self.K)
        res = solve_fp_forward(self.grid, self.coeff, series_drift(b, self.grid), self.m0)
        return b, res

    def __call__(self, c):
        self.calls += 1
        _, res = self.flow(c)
        m_T = SubProbMeasure.from_grid(res.field.values[-1], self.grid.dx)
        return moment(m_T, bump)


def _mass(m0):
    return m0.mass if isinstance(m0, SubProbMeasure) else float(np.sum(m0[1:-1]) / (len(m0) - 1))


def toy_fixed_point(m0, grid, tol=1e-10, max_iter=200, K=200, method="damped", damping=0.5):
    """Solve ``c = c'(c)`` by damped iteration (default) or bisection.

    Every iterate stays in ``[0, mass(m0) / 4]``.
    """
    fmap = ToyFixedPoint(m0, grid, K)
    upper = 0.25 * _mass(m0)
    history = []
    if method == "damped":
        c = 0.0
        for _ in range(max_iter):
            c_new = fmap(c)
            history.append((c, c_new))
            if abs(c_new - c) <= tol:
                c = c_new
                break
            c = min(max((1.0 - damping) * c + damping * c_new, 0.0), upper)
        else:
            raise ConvergenceError(f"toy fixed point did not converge in {max_iter} steps", history)
    elif method == "bisection":
        lo, hi = 0.0, 0.25
        g_lo = fmap(lo) - lo
        history.append((lo, lo + g_lo))
        if g_lo <= 0.0:
            c = lo
        else:
            for _ in range(max_iter):
                mid = 0.5 * (lo + hi)
                g_mid = fmap(mid) - mid
                history.append((mid, mid + g_mid))
                if g_mid > 0.0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= tol:
                    break
            else:
                raise ConvergenceError("bisection did not reach the tolerance", history)
            c = 0.5 * (lo + hi)
    else:
        raise PreconditionError(f"unknown method {method!r}")
    b, res = fmap.flow(c)
    return ToySolution(c, b, K, grid.t0, grid.T, res.field, history, method)


def toy_cross_check(m0, grid, K=200, tol=1e-10, mfg_tol=1e-9, damping=0.5):
    """Compare the series route with the generic MFG solver on one instance."""
    from .mfg import solve_mfg, toy_coupling

    toy = toy_fixed_point(m0, grid, tol=tol, K=K)
    sol = solve_mfg(m0, toy_coupling(), grid, Coefficients(1.0, "quadratic"),
                    damping=damping, tol=mfg_tol)
    m_T = SubProbMeasure.from_grid(sol.m.values[-1], grid.dx)
    c_mfg = moment(m_T, bump)
    U_series = toy.U_grid()
    U_mfg = sol.u.values[0]
    return {
        "sup_gap_U": float(np.max(np.abs(U_series - U_mfg))),
        "c_gap": abs(toy.c_star - c_mfg),
        "c_series": toy.c_star,
        "c_mfg": c_mfg,
        "mfg_iterations": sol.iterations,
        "n_space": grid.n_space,
        "n_time": grid.n_time,
    }
