"""Monte-Carlo simulation of the absorbed N-player game.

Players follow ``dX = alpha dt + sqrt(2) sigma dB`` until they first reach
0 or 1, where they stop and leave the empirical measure.  Crossing is
detected after each Euler-Maruyama step and the position is clamped to the
crossed endpoint.  Every player draws from its own Philox stream keyed by
``(seed, player index)``, so a run does not depend on how players are
batched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import PreconditionError
from .measures import EmpiricalState, SubProbMeasure, empirical_measure, flat_distance
from .pde1d import spatial_gradient

_CHUNK = 4096


def player_rng(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def _n_steps(t0, T, dt):
    if dt <= 0:
        raise PreconditionError("dt must be positive")
    if T < t0:
        raise PreconditionError("need T >= t0")
    n = int(round((T - t0) / dt))
    if not np.isclose(n * dt, T - t0, rtol=1e-9, atol=1e-12):
        raise PreconditionError("dt must divide T - t0")
    return n


def _const_drift(drift):
    if callable(drift):
        return drift
    val = float(drift)
    return lambda t, x: np.full_like(np.asarray(x, dtype=float), val)


def simulate_absorbed_sde(drift, sigma, x0, t0, T, dt, seed):
    """One absorbed Euler-Maruyama path.

    ``drift`` is a callable ``(t, x)`` or a constant.  Returns
    ``(times, path, tau)``; the path is frozen at the crossed endpoint from
    the step where it first leaves ``(0, 1)``.
    """
    if not 0.0 <= x0 <= 1.0:
        raise PreconditionError("x0 must lie in [0, 1]")
    n = _n_steps(t0, T, dt)
    times = t0 + dt * np.arange(n + 1)
    path = np.empty(n + 1)
    path[0] = x0
    if x0 in (0.0, 1.0):
        path[:] = x0
        return times, path, float(t0)
    f = _const_drift(drift)
    rng = player_rng(seed, 0)
    scale = np.sqrt(2.0 * dt) * sigma
    x = float(x0)
    tau = float(T)
    for k in range(n):
        xi = rng.standard_normal()
        x = x + float(f(times[k], x)) * dt + scale * xi
        if x <= 0.0 or x >= 1.0:
            x = 0.0 if x <= 0.0 else 1.0
            path[k + 1:] = x
            tau = float(times[k + 1])
            break
        path[k + 1] = x
    return times, path, tau


@dataclass(frozen=True, eq=False)
class Policy:
    """Feedback control ``alpha`` applied by every player.

    ``kind`` is one of ``constant``, ``mean_field``, ``feedback`` (any
    vectorised ``fn(t, x)``) and ``projection`` (``evaluator(t, x_i, m)``
    returning ``d/dx U(t, x_i, m)``, applied with the co-player measure).
    """

    kind: str
    value: float = 0.0
    fn: Optional[Callable] = None
    evaluator: Optional[Callable] = None

    @classmethod
    def constant(cls, value):
        return cls("constant", value=float(value))

    @classmethod
    def feedback(cls, fn):
        return cls("feedback", fn=fn)

    @classmethod
    def mean_field(cls, solution, coeff):
        """``alpha = -H_p(u_x)`` from a converged MFG solution."""
        grid = solution.grid
        b = coeff.Hp(spatial_gradient(solution.u.values, grid.dx))
        x_nodes, t_nodes = grid.x, grid.t

        def fn(t, x):
            k = int(np.clip(np.searchsorted(t_nodes, t + 1e-12 * grid.dt, side="right") - 1,
                            0, grid.n_time - 1))
            return -np.interp(x, x_nodes, b[k])

        return cls("mean_field", fn=fn)

    @classmethod
    def projection(cls, evaluator=None):
        return cls("projection", evaluator=evaluator)

    def validate(self):
        if self.kind == "projection" and self.evaluator is None:
            raise PreconditionError("configuration error: projection policy needs a U evaluator")
        if self.kind in ("mean_field", "feedback") and self.fn is None:
            raise PreconditionError(f"configuration error: {self.kind} policy needs a drift")
        if self.kind not in ("constant", "mean_field", "feedback", "projection"):
            raise PreconditionError(f"unknown policy kind {self.kind!r}")

    def __call__(self, t, x, active):
        if self.kind == "constant":
            return np.full(x.shape, self.value)
        if self.kind != "projection":
            return np.asarray(self.fn(t, x), dtype=float) * np.ones(x.shape)
        out = np.zeros(x.shape)
        state = EmpiricalState(np.where(active, x, np.where(x >= 0.5, 1.0, 0.0)), active)
        for i in np.flatnonzero(active):
            mi = empirical_measure(state, i) if x.size > 1 else SubProbMeasure.zero()
            out[i] = -float(self.evaluator(t, x[i], mi))
        return out


def projection_evaluator(coupling, grid, coeff, **solver_kw):
    """``(t, x, m) -> U_x(t, x, m)`` by an MFG solve on ``[t, T]``.

    Expensive (one fixed-point solve per call); meant for small N.
    """
    from .mfg import solve_mfg

    def evaluator(t, x, m):
        sol = solve_mfg(m, coupling, grid, coeff, t0=min(max(t, grid.t0), grid.T - grid.dt),
                        **solver_kw)
        ux = spatial_gradient(sol.u.values[0], sol.grid.dx)
        return coeff.Hp(np.interp(x, sol.grid.x, ux))

    return evaluator


def sample_initial(m0, n, seed):
    """Player-wise draws from ``m0`` plus absorbed-at-start flags.

    Each player starts absorbed with probability ``1 - mass(m0)`` and is
    otherwise placed according to ``m0 / mass(m0)``.  An absorbed start is
    recorded at 0.
    """
    pos = np.zeros(n)
    active = np.zeros(n, dtype=bool)
    mass = m0.mass
    if mass <= 0.0:
        return pos, active
    if m0.is_grid:
        v = np.asarray(m0.values)
        cells = 0.5 * (v[1:] + v[:-1]) * m0.dx
        cdf = np.cumsum(cells) / cells.sum()
    else:
        cdf = np.cumsum(m0.weights) / m0.weights.sum()
    cdf[-1] = 1.0
    for i in range(n):
        u_abs, u_cell, u_pos = player_rng_initial(i, seed)
        if u_abs >= mass:
            continue
        j = int(np.searchsorted(cdf, u_cell, side="right"))
        if m0.is_grid:
            x = m0.dx * (j + _linear_inverse(v[j], v[j + 1], u_pos))
            x = min(max(x, 1e-15), 1.0 - 1e-15)
        else:
            x = float(m0.positions[j])
        pos[i] = x
        active[i] = True
    return pos, active


def player_rng_initial(i, seed):
    # the first three uniforms of the player's stream; noise uses a separate key
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(i), 1])))
    return rng.random(3)


def _linear_inverse(a, b, u):
    # inverse CDF on [0, 1] of the density proportional to a (1 - s) + b s
    if abs(a - b) <= 1e-14 * max(a, b, 1e-300):
        return u
    return (np.sqrt(a * a + u * (b * b - a * a)) - a) / (b - a)


@dataclass(frozen=True, eq=False)
class GameRun:
    """Paths, hitting times and kinetic costs of one N-player simulation.

    ``paths[r]`` holds the positions at recorded step ``r`` (every
    ``record_stride`` steps, first and last step always present).
    ``kinetic`` is the accumulated ``1/2 |alpha|^2 dt`` before absorption;
    :func:`evaluate_cost` adds the coupling terms.
    """

    times: np.ndarray
    paths: np.ndarray
    tau: np.ndarray
    kinetic: np.ndarray
    initial: np.ndarray
    seed: int
    dt: float
    t0: float
    T: float
    sigma: float
    record_stride: int = 1
    config: dict = field(default_factory=dict)

    @property
    def n_players(self):
        return self.paths.shape[1]

    def active(self, r):
        x = self.paths[r]
        return (x > 0.0) & (x < 1.0)

    def state(self, r):
        return EmpiricalState(self.paths[r], self.active(r))

    def empirical(self, r):
        """``1/N`` times the atoms of active players at recorded step ``r``."""
        return empirical_measure(self.state(r))

    def co_player_measure(self, r, i):
        if self.n_players == 1:
            return SubProbMeasure.zero()
        return empirical_measure(self.state(r), i)

    @property
    def mass_trace(self):
        x = self.paths
        return ((x > 0.0) & (x < 1.0)).sum(axis=1) / self.n_players

    def record_index(self, t):
        return int(np.argmin(np.abs(self.times - t)))

    def to_files(self, csv_path, json_path):
        header = ",".join(["t"] + [f"x{i}" for i in range(self.n_players)])
        np.savetxt(csv_path, np.column_stack([self.times, self.paths]), delimiter=",",
                   header=header, comments="", fmt="%.17g")
        meta = {"tau": self.tau.tolist(), "kinetic": self.kinetic.tolist(),
                "initial": self.initial.tolist(), "seed": self.seed, "dt": self.dt,
                "t0": self.t0, "T": self.T, "sigma": self.sigma,
                "record_stride": self.record_stride, "config": self.config}
        with open(json_path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def from_files(cls, csv_path, json_path):
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        with open(json_path) as fh:
            meta = json.load(fh)
        return cls(data[:, 0], data[:, 1:], np.array(meta["tau"]), np.array(meta["kinetic"]),
                   np.array(meta["initial"]), meta["seed"], meta["dt"], meta["t0"], meta["T"],
                   meta["sigma"], meta["record_stride"], meta["config"])


def simulate_n_players(N, m0, policy, sigma, t0, T, dt, seed, record_stride=1, x0=None):
    """Simulate ``N`` players under a common feedback policy.

    Initial positions are i.i.d. from ``m0`` (see :func:`sample_initial`)
    unless ``x0`` gives them explicitly (values on the boundary start
    absorbed).
    """
    if N < 1:
        raise PreconditionError("need N >= 1")
    policy.validate()
    n = _n_steps(t0, T, dt)
    if x0 is None:
        pos, active = sample_initial(m0, N, seed)
    else:
        pos = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (N,)))
        if np.any(pos < 0) or np.any(pos > 1):
            raise PreconditionError("initial positions must lie in [0, 1]")
        active = (pos > 0.0) & (pos < 1.0)
    initial = pos.copy()
    tau = np.where(active, T, t0).astype(float)
    kinetic = np.zeros(N)
    rngs = [player_rng(seed, i) for i in range(N)]
    scale = np.sqrt(2.0 * dt) * sigma
    stride = max(int(record_stride), 1)
    rec_steps = list(range(0, n + 1, stride))
    if rec_steps[-1] != n:
        rec_steps.append(n)
    rec_set = {k: r for r, k in enumerate(rec_steps)}
    paths = np.empty((len(rec_steps), N))
    paths[0] = pos
    x = pos.copy()
    noise = None
    for k in range(n):
        if k % _CHUNK == 0:
            m = min(_CHUNK, n - k)
            noise = np.stack([g.standard_normal(m) for g in rngs], axis=1) if N else None
        if not active.any():
            if k + 1 in rec_set:
                paths[rec_set[k + 1]] = x
            continue
        t = t0 + k * dt
        alpha = policy(t, x, active)
        alpha = np.where(active, alpha, 0.0)
        kinetic += 0.5 * alpha * alpha * dt
        step = alpha * dt + scale * noise[k % _CHUNK]
        x_new = np.where(active, x + step, x)
        hit = active & ((x_new <= 0.0) | (x_new >= 1.0))
        if hit.any():
            x_new[hit] = np.where(x_new[hit] <= 0.0, 0.0, 1.0)
            tau[hit] = t0 + (k + 1) * dt
            active = active & ~hit
        x = x_new
        if k + 1 in rec_set:
            paths[rec_set[k + 1]] = x
    times = t0 + dt * np.asarray(rec_steps, dtype=float)
    cfg = {"N": N, "policy": policy.kind}
    return GameRun(times, paths, tau, kinetic, initial, int(seed), float(dt), float(t0),
                   float(T), float(sigma), stride, cfg)


def evaluate_cost(run, policy, coupling, reference=None):
    """Realised costs ``J_i``.

    Kinetic part from the simulation, running cost ``F`` summed on the
    recorded steps before ``tau_i`` (exact when ``record_stride = 1``) and
    terminal cost ``G(X_tau, .)``.  The measure argument is the co-player
    empirical measure, or the density ``reference(t)`` of a mean-field flow
    when a SpaceTimeField is given.
    """
    N = run.n_players
    costs = run.kinetic.copy()

    def measure_at(r, i):
        if reference is not None:
            k = int(np.argmin(np.abs(reference.grid.t - run.times[r])))
            return SubProbMeasure.from_grid(reference.values[k], reference.grid.dx)
        return run.co_player_measure(r, i)

    if coupling.F is not None:
        step = run.dt * run.record_stride
        for r in range(len(run.times) - 1):
            t = run.times[r]
            alive = run.tau > t
            for i in np.flatnonzero(alive):
                costs[i] += float(coupling.F(t, np.array([run.paths[r, i]]),
                                             measure_at(r, i))[0]) * step
    if coupling.G is not None:
        for i in range(N):
            # paths are frozen after absorption, so the last row is X at tau
            r = run.record_index(run.tau[i])
            xi = np.array([run.paths[-1, i]])
            costs[i] += float(coupling.G(xi, measure_at(r, i))[0])
    return costs


def empirical_vs_fp(run, m, sample_times, method="chain"):
    """Flat distance between the empirical measure and the FP density."""
    out = []
    for t in sample_times:
        r = run.record_index(t)
        k = int(np.argmin(np.abs(m.grid.t - t)))
        fp = SubProbMeasure.from_grid(m.values[k], m.grid.dx)
        out.append(flat_distance(run.empirical(r), fp, method))
    return out
