"""Subprobability measures on [0, 1] and the flat (bounded-Lipschitz) metric.

Two representations are supported: finite atom lists and grid densities
on a uniform mesh (integrated with the trapezoid rule).  Mass that reaches
the boundary is deleted, never renormalised, so masses live in [0, 1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import PreconditionError

MASS_SLACK = 1e-12


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def grid_points(dx):
    """Nodes of the uniform grid of spacing ``dx`` on [0, 1]."""
    n = int(round(1.0 / dx))
    if n < 2 or abs(n * dx - 1.0) > 1e-12:
        raise PreconditionError(f"dx={dx!r} does not divide 1 into at least two cells")
    return np.linspace(0.0, 1.0, n + 1)


def trapezoid_weights(n_nodes, dx):
    w = np.full(n_nodes, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


@dataclass(frozen=True, eq=False)
class SubProbMeasure:
    """A non-negative measure on [0, 1] with total mass at most one.

    Build instances with :meth:`from_atoms`, :meth:`from_grid` or one of
    the shortcuts (:meth:`zero`, :meth:`dirac`, :meth:`uniform`).
    """

    positions: np.ndarray | None = None
    weights: np.ndarray | None = None
    values: np.ndarray | None = None
    dx: float | None = None
    mass: float = field(init=False)

    def __post_init__(self):
        if self.values is None:
            pos = _readonly(self.positions if self.positions is not None else [])
            w = _readonly(self.weights if self.weights is not None else [])
            if pos.shape != w.shape or pos.ndim != 1:
                raise PreconditionError("atom positions and weights must be 1-D and equal length")
            if np.any(w <= 0):
                raise PreconditionError("atom weights must be positive")
            if np.any(pos <= 0.0) or np.any(pos >= 1.0):
                raise PreconditionError("atoms must lie in the open interval (0, 1); "
                                        "absorbed mass is deleted, not parked on the boundary")
            object.__setattr__(self, "positions", pos)
            object.__setattr__(self, "weights", w)
            mass = float(w.sum())
        else:
            vals = _readonly(self.values)
            if vals.ndim != 1 or vals.size < 3:
                raise PreconditionError("grid density needs at least three nodes")
            if self.dx is None or abs(self.dx * (vals.size - 1) - 1.0) > 1e-12:
                raise PreconditionError("grid spacing inconsistent with the number of nodes")
            if np.any(vals < 0):
                raise PreconditionError("grid density must be non-negative")
            if vals[0] != 0.0 or vals[-1] != 0.0:
                raise PreconditionError("grid density must vanish at both boundary nodes")
            object.__setattr__(self, "values", vals)
            object.__setattr__(self, "dx", float(self.dx))
            mass = float(vals[1:-1].sum() * self.dx)
        if mass > 1.0 + MASS_SLACK:
            raise PreconditionError(f"total mass {mass!r} exceeds one")
        object.__setattr__(self, "mass", mass)

    # -- constructors -------------------------------------------------------
    @classmethod
    def from_atoms(cls, positions, weights):
        return cls(positions=positions, weights=weights)

    @classmethod
    def from_grid(cls, values, dx):
        return cls(values=values, dx=dx)

    @classmethod
    def zero(cls):
        return cls(positions=[], weights=[])

    @classmethod
    def dirac(cls, x, weight=1.0):
        return cls(positions=[x], weights=[weight])

    @classmethod
    def uniform(cls, n_space, mass=1.0):
        """Flat grid density with the requested trapezoid mass.

        The boundary nodes are zero, so the interior value is
        ``mass / (1 - dx)`` rather than ``mass``.
        """
        dx = 1.0 / (n_space - 1)
        vals = np.zeros(n_space)
        vals[1:-1] = mass / ((n_space - 2) * dx)
        return cls(values=vals, dx=dx)

    @classmethod
    def from_function(cls, f, n_space):
        """Grid density ``f(x)`` sampled at the nodes (boundary set to zero)."""
        x = np.linspace(0.0, 1.0, n_space)
        vals = np.asarray(f(x), dtype=float).copy()
        vals[0] = vals[-1] = 0.0
        return cls(values=vals, dx=1.0 / (n_space - 1))

    # -- views --------------------------------------------------------------
    @property
    def is_grid(self):
        return self.values is not None

    def support(self):
        """``(points, weights)`` such that ``int f dm = sum(weights * f(points))``.

        Zero-weight boundary nodes of a grid density are dropped.
        """
        if self.is_grid:
            x = np.linspace(0.0, 1.0, self.values.size)
            return x[1:-1], self.values[1:-1] * self.dx
        return self.positions, self.weights

    def scaled(self, factor):
        if factor < 0:
            raise PreconditionError("scale factor must be non-negative")
        if self.is_grid:
            return SubProbMeasure.from_grid(self.values * factor, self.dx)
        if factor == 0:
            return SubProbMeasure.zero()
        return SubProbMeasure.from_atoms(self.positions, self.weights * factor)

    # -- serialisation ------------------------------------------------------
    def to_dict(self):
        if self.is_grid:
            return {"grid": {"dx": self.dx, "values": self.values.tolist()}}
        return {"atoms": [[float(x), float(w)] for x, w in zip(self.positions, self.weights)]}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        if "grid" in d:
            return cls.from_grid(d["grid"]["values"], d["grid"]["dx"])
        if "atoms" in d:
            atoms = np.asarray(d["atoms"], dtype=float).reshape(-1, 2)
            return cls.from_atoms(atoms[:, 0], atoms[:, 1])
        raise PreconditionError("measure JSON needs an 'atoms' or a 'grid' key")

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))

    def __repr__(self):
        kind = f"grid(n={self.values.size})" if self.is_grid else f"atoms(k={self.positions.size})"
        return f"SubProbMeasure({kind}, mass={self.mass:.6g})"


@dataclass(frozen=True, eq=False)
class EmpiricalState:
    """Positions of N players plus their activity flags."""

    positions: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        pos = _readonly(self.positions)
        act = np.array(self.active, dtype=bool)
        act.setflags(write=False)
        if pos.shape != act.shape or pos.ndim != 1:
            raise PreconditionError("positions and active flags must be 1-D and equal length")
        inside = (pos > 0.0) & (pos < 1.0)
        if np.any(act & ~inside):
            raise PreconditionError("active players must lie in (0, 1)")
        if np.any(~act & inside):
            raise PreconditionError("absorbed players must sit on the boundary")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "active", act)

    @property
    def n_players(self):
        return self.positions.size


def empirical_measure(state, excluded=None):
    """Empirical measure of the active players.

    With ``excluded=i`` (0-based) this is the co-player measure
    ``1/(N-1) * sum_{j != i, active} delta_{x_j}``; with ``excluded=None``
    it is ``1/N`` times the sum over all active players.
    """
    n = state.n_players
    keep = state.active.copy()
    if excluded is None:
        denom = n
    else:
        if not 0 <= excluded < n:
            raise PreconditionError(f"excluded index {excluded} out of range for N={n}")
        if n < 2:
            raise PreconditionError("no co-players")
        keep[excluded] = False
        denom = n - 1
    if denom == 0:
        return SubProbMeasure.zero()
    pos = state.positions[keep]
    return SubProbMeasure.from_atoms(pos, np.full(pos.size, 1.0 / denom))


def moment(m, f):
    """``int f dm`` for a scalar function ``f`` vectorised over positions."""
    pts, w = m.support()
    if pts.size == 0:
        return 0.0
    return float(np.dot(w, np.asarray(f(pts), dtype=float)))


def grid_project(m, dx):
    """Deposit ``m`` on the uniform grid of spacing ``dx`` (hat-function split).

    Mass is preserved exactly.  Atoms in a boundary cell put all their mass
    on the single interior node of that cell, since boundary nodes must
    stay empty.
    """
    x = grid_points(dx)
    n = x.size
    if m.is_grid and abs(m.dx - dx) < 1e-15:
        return m
    vals = np.zeros(n)
    pts, w = m.support()
    if pts.size:
        if np.any(pts <= 0.0) or np.any(pts >= 1.0):
            raise PreconditionError("cannot project an atom located on the boundary")
        s = pts / dx
        near = np.abs(s - np.round(s)) < 1e-9
        s[near] = np.round(s[near])  # atoms on a node stay on that node
        k = np.clip(np.floor(s).astype(int), 0, n - 2)
        theta = s - k
        left = w * (1.0 - theta)
        right = w * theta
        # boundary cells: move the share of the boundary node to its neighbour
        first = k == 0
        right[first] += left[first]
        left[first] = 0.0
        last = k == n - 2
        left[last] += right[last]
        right[last] = 0.0
        np.add.at(vals, k, left / dx)
        np.add.at(vals, k + 1, right / dx)
    vals[0] = vals[-1] = 0.0
    return SubProbMeasure.from_grid(vals, dx)


def mollified_dirac(y, n_space):
    """Unit hat of width ``2 dx`` centred at ``y``, as grid values.

    Unlike :func:`grid_project` the share falling on a boundary node is
    deleted (Dirichlet condition), so the result tends to zero as ``y``
    approaches the boundary and is exactly zero for ``y`` in {0, 1}.
    """
    if not 0.0 <= y <= 1.0:
        raise PreconditionError("y must lie in [0, 1]")
    dx = 1.0 / (n_space - 1)
    vals = np.zeros(n_space)
    s = y / dx
    k = min(int(np.floor(s)), n_space - 2)
    theta = s - k
    vals[k] += (1.0 - theta) / dx
    vals[k + 1] += theta / dx
    vals[0] = vals[-1] = 0.0
    return vals


# -- flat metric ------------------------------------------------------------

@njit(cache=True)
def _chain_lp_value(gaps, nu):
    # max sum_i nu_i phi_i  s.t. |phi_i| <= 1, |phi_{i+1} - phi_i| <= gaps_i.
    # Dynamic programming over the chain; the value function in phi is
    # concave piecewise linear, stored by breakpoints (xs, vs).
    n = nu.size
    cap = n + 4
    xs = np.empty(cap)
    vs = np.empty(cap)
    xb = np.empty(cap)
    vb = np.empty(cap)
    xs[0] = -1.0
    xs[1] = 1.0
    vs[0] = -nu[0]
    vs[1] = nu[0]
    k = 2
    for i in range(1, n):
        g = gaps[i - 1]
        if g >= 2.0:
            best = vs[0]
            for q in range(1, k):
                if vs[q] > best:
                    best = vs[q]
            xs[0] = -1.0
            xs[1] = 1.0
            vs[0] = best
            vs[1] = best
            k = 2
        elif g > 0.0:
            j = 0
            for q in range(1, k):
                if vs[q] > vs[j]:
                    j = q
            # dilation: left branch moves by -g, right branch by +g
            kk = 0
            for q in range(j + 1):
                xb[kk] = xs[q] - g
                vb[kk] = vs[q]
                kk += 1
            for q in range(j, k):
                xb[kk] = xs[q] + g
                vb[kk] = vs[q]
                kk += 1
            # clip to [-1, 1]
            lo = 0
            while xb[lo] < -1.0:
                lo += 1
            hi = kk - 1
            while xb[hi] > 1.0:
                hi -= 1
            k = 0
            if lo > 0 and xb[lo] > -1.0:
                t = (-1.0 - xb[lo - 1]) / (xb[lo] - xb[lo - 1])
                xs[k] = -1.0
                vs[k] = vb[lo - 1] + t * (vb[lo] - vb[lo - 1])
                k += 1
            for q in range(lo, hi + 1):
                xs[k] = xb[q]
                vs[k] = vb[q]
                k += 1
            if hi < kk - 1 and xb[hi] < 1.0:
                t = (1.0 - xb[hi]) / (xb[hi + 1] - xb[hi])
                xs[k] = 1.0
                vs[k] = vb[hi] + t * (vb[hi + 1] - vb[hi])
                k += 1
        for q in range(k):
            vs[q] += nu[i] * xs[q]
    best = vs[0]
    for q in range(1, k):
        if vs[q] > best:
            best = vs[q]
    return best


@njit(cache=True)
def _chain_lp_rows(gaps, nu_rows):
    out = np.empty(nu_rows.shape[0])
    for r in range(nu_rows.shape[0]):
        out[r] = _chain_lp_value(gaps, nu_rows[r])
    return out


def _merge_support(points, nu):
    order = np.argsort(points, kind="stable")
    pts = points[order]
    nu = nu[order]
    uniq, idx = np.unique(pts, return_inverse=True)
    merged = np.zeros(uniq.size)
    np.add.at(merged, idx, nu)
    return uniq, merged


def signed_support(m1, m2):
    """Merged sorted support of ``m1 - m2`` with the signed weights."""
    p1, w1 = m1.support()
    p2, w2 = m2.support()
    return _merge_support(np.concatenate([p1, p2]), np.concatenate([w1, -w2]))


def flat_norm(points, nu, method="chain"):
    """``sup { sum nu_i phi(x_i) : Lip(phi) <= 1, |phi| <= 1 }`` for a signed
    discrete measure.

    ``method="chain"`` solves the linear program exactly by dynamic
    programming along the sorted support; ``method="lp"`` hands the same
    program (adjacent-pair Lipschitz constraints) to HiGHS.
    """
    points = np.asarray(points, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if points.size == 0:
        return 0.0
    pts, nu = _merge_support(points, nu)
    if method == "chain":
        return max(0.0, float(_chain_lp_value(np.diff(pts), nu)))
    if method == "lp":
        return _flat_norm_highs(pts, nu)
    raise PreconditionError(f"unknown flat-norm method {method!r}")


def _flat_norm_highs(pts, nu):
    from scipy.optimize import linprog
    from scipy.sparse import diags, vstack

    n = pts.size
    if n == 1:
        return abs(float(nu[0]))
    d = diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
    a_ub = vstack([d, -d]).tocsr()
    gaps = np.diff(pts)
    b_ub = np.concatenate([gaps, gaps])
    res = linprog(-nu, A_ub=a_ub, b_ub=b_ub, bounds=[(-1.0, 1.0)] * n, method="highs")
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed on flat-norm LP: {res.message}")
    return max(0.0, float(-res.fun))


def flat_distance(m1, m2, method="chain"):
    """Generalised Wasserstein distance between two subprobability measures."""
    pts, nu = signed_support(m1, m2)
    return flat_norm(pts, nu, method=method)


def flat_distance_rows(rows1, rows2, dx):
    """Flat distance between matching rows of two grid-density tables.

    ``rows*`` have shape ``(n_rows, n_space)``; returns one distance per row.
    Values are treated as signed, so this also measures linearised flows.
    """
    rows1 = np.atleast_2d(np.asarray(rows1, dtype=float))
    rows2 = np.atleast_2d(np.asarray(rows2, dtype=float))
    nu = np.ascontiguousarray((rows1 - rows2)[:, 1:-1] * dx)
    gaps = np.full(nu.shape[1] - 1, dx)
    return np.maximum(_chain_lp_rows(gaps, nu), 0.0)
