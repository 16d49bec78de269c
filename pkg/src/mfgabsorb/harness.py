"""Experiment configuration, rate fits and the end-to-end convergence study."""

from __future__ import annotations

import copy
import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import jsonschema
import numpy as np

from . import svg
from .errors import MFGAbsorbError, PreconditionError
from .measures import SubProbMeasure, flat_distance
from .mfg import couplings, solve_mfg
from .pde1d import Coefficients, Grid1D

KINDS = ("mfg", "toy", "simulate", "nash2", "converge", "flat-distance")


# -- rate fits ---------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    N: tuple
    err: tuple
    slope: float
    intercept: float
    r2: float

    @property
    def constant(self):
        return float(np.exp(self.intercept))

    def to_dict(self):
        return {"N": list(self.N), "err": list(self.err), "slope": self.slope,
                "intercept": self.intercept, "constant": self.constant, "r2": self.r2}


def fit_rate(N, err):
    """Least squares of ``ln err`` on ``ln N``."""
    N = np.asarray(N, dtype=float)
    err = np.asarray(err, dtype=float)
    if N.shape != err.shape or N.ndim != 1:
        raise PreconditionError("N and err must be 1-D of equal length")
    if N.size < 3:
        raise PreconditionError("a rate fit needs at least 3 points")
    if np.any(err <= 0) or np.any(N <= 0):
        raise PreconditionError("rate fit needs positive N and errors")
    lx, ly = np.log(N), np.log(err)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    fit = A @ np.array([slope, intercept])
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum((ly - fit) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(tuple(N.tolist()), tuple(err.tolist()), float(slope), float(intercept), r2)


# -- configuration -----------------------------------------------------------

_GRID = {
    "type": "object",
    "properties": {
        "n_space": {"type": "integer", "minimum": 3},
        "n_time": {"type": "integer", "minimum": 2},
        "t0": {"type": "number"},
        "T": {"type": "number"},
    },
    "required": ["n_space", "n_time"],
}
_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "experiment": {"enum": list(KINDS)},
        "grid": _GRID,
        "coupling": {"enum": ["toy", "zero"]},
        "sigma": _POS,
        "hamiltonian": {"enum": ["quadratic", "linear", "none"]},
        "m0": {"type": "object"},
        "m1": {"type": "object"},
        "m2": {"type": "object"},
        "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "max_iter": {"type": "integer", "minimum": 1},
        "tolerances": {"type": "object", "additionalProperties": _POS},
        "K": {"type": "integer", "minimum": 1},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "N": {"type": "integer", "minimum": 1},
        "N_ladder": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "dt_particles": _POS,
        "x0": {"type": "number", "minimum": 0, "maximum": 1},
        "policy": {"enum": ["mean_field", "constant"]},
        "refinement": {"type": "array",
                       "items": {"type": "array", "items": {"type": "integer", "minimum": 3},
                                 "minItems": 2, "maxItems": 2}},
        "nash": {"type": "object",
                 "properties": {"levels": {"type": "array"},
                                "samples": {"type": "integer", "minimum": 1}}},
        "workers": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
    },
    "required": ["experiment"],
}

SUMMARY_SCHEMA = {
    "type": "object",
    "properties": {
        "status": {"enum": ["complete", "failed"]},
        "completed": {"type": "array", "items": {"type": "string"}},
        "error": {"type": ["string", "null"]},
        "toy_refinement": {"type": "array", "items": {
            "type": "object",
            "properties": {"n_space": {"type": "integer"}, "n_time": {"type": "integer"},
                           "sup_gap_U": {"type": "number"}, "c_gap": {"type": "number"}},
            "required": ["n_space", "n_time", "sup_gap_U", "c_gap"]}},
        "empirical_rate": {"type": "object", "properties": {
            "N": {"type": "array"}, "err": {"type": "array"},
            "slope": {"type": ["number", "null"]}, "r2": {"type": ["number", "null"]}},
            "required": ["N", "err", "slope"]},
        "nash2": {"type": "array", "items": {
            "type": "object",
            "properties": {"n_space": {"type": "integer"},
                           "projection_gap": {"type": "number"},
                           "nash_residual": {"type": "number"},
                           "w_L1": {"type": "number"}},
            "required": ["n_space", "projection_gap", "nash_residual", "w_L1"]}},
        "config": {"type": "object"},
    },
    "required": ["status", "completed", "config"],
}

DEFAULTS = {
    "grid": {"n_space": 201, "n_time": 801, "t0": 0.0, "T": 0.1},
    "coupling": "toy",
    "sigma": 1.0,
    "hamiltonian": "quadratic",
    "m0": {"uniform": 1.0},
    "damping": 0.5,
    "max_iter": 200,
    "tolerances": {"mfg": 1e-9, "toy": 1e-10},
    "K": 200,
    "seeds": list(range(20)),
    "N": 256,
    "N_ladder": [16, 64, 256, 1024],
    "dt_particles": 2.5e-5,
    "x0": 0.5,
    "policy": "mean_field",
    "refinement": [[101, 201], [201, 801], [401, 3201]],
    "nash": {"levels": [[21, 101], [41, 401]], "samples": 4000},
    "workers": 1,
    "output": "out",
}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    data: dict

    @classmethod
    def from_dict(cls, d):
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise PreconditionError(f"invalid config: {exc.message}") from None
        merged = copy.deepcopy(DEFAULTS)
        for k, v in d.items():
            if isinstance(v, dict) and isinstance(merged.get(k), dict):
                merged[k] = {**merged[k], **v}
            else:
                merged[k] = v
        if merged["tolerances"] and min(merged["tolerances"].values()) <= 0:
            raise PreconditionError("tolerances must be positive")
        ladder = merged["N_ladder"]
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise PreconditionError("N_ladder must be strictly increasing")
        g = merged["grid"]
        if g.get("T", 1.0) <= g.get("t0", 0.0):
            raise PreconditionError("grid needs T > t0")
        return cls(merged)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise PreconditionError(f"cannot read config {path}: {exc}") from None

    def __getitem__(self, key):
        return self.data[key]

    def grid(self, n_space=None, n_time=None):
        g = self.data["grid"]
        return Grid1D(n_space or g["n_space"], n_time or g["n_time"], g.get("t0", 0.0),
                      g.get("T", 1.0))

    def coeff(self):
        ham = self.data["hamiltonian"]
        return Coefficients(self.data["sigma"], ham)

    def coupling(self):
        return couplings()[self.data["coupling"]]

    def tol(self, key):
        return self.data["tolerances"].get(key, DEFAULTS["tolerances"].get(key, 1e-9))

    def measure(self, key="m0", n_space=None):
        return parse_measure(self.data[key], n_space or self.data["grid"]["n_space"])

    def to_dict(self):
        return copy.deepcopy(self.data)


def parse_measure(spec, n_space):
    """Measure from a config entry: serialised form, ``{"uniform": mass}`` or ``{"zero": 1}``."""
    if "uniform" in spec:
        return SubProbMeasure.uniform(n_space, float(spec["uniform"]))
    if "zero" in spec:
        return SubProbMeasure.zero()
    if "dirac" in spec:
        return SubProbMeasure.dirac(float(spec["dirac"]))
    return SubProbMeasure.from_dict(spec)


def example_config(kind="converge"):
    if kind not in KINDS:
        raise PreconditionError(f"unknown experiment {kind!r}")
    cfg = {"experiment": kind, "grid": dict(DEFAULTS["grid"]), "coupling": "toy",
           "m0": {"uniform": 1.0}}
    if kind == "flat-distance":
        cfg = {"experiment": kind, "m1": {"atoms": [[0.2, 1.0]]}, "m2": {"atoms": [[0.7, 1.0]]}}
    elif kind == "simulate":
        cfg.update({"N": 256, "seeds": [0], "dt_particles": 1e-4, "policy": "mean_field"})
    elif kind == "nash2":
        cfg["grid"] = {"n_space": 21, "n_time": 101, "t0": 0.0, "T": 0.1}
    elif kind == "converge":
        cfg.update({"seeds": list(range(20)), "N_ladder": [16, 64, 256, 1024],
                    "refinement": DEFAULTS["refinement"], "nash": DEFAULTS["nash"]})
    return cfg


def pool_map(fn, items, workers=1):
    """Ordered map over a fixed-size thread pool (results follow input order)."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- convergence study -------------------------------------------------------

def _toy_refinement(cfg):
    from .toy_model import toy_cross_check

    def one(level):
        n_space, n_time = level
        g = cfg.grid(n_space, n_time)
        m0 = cfg.measure(n_space=n_space)
        if cfg["coupling"] == "zero":
            sol = solve_mfg(m0, cfg.coupling(), g, cfg.coeff(), damping=cfg["damping"],
                            tol=cfg.tol("mfg"), max_iter=cfg["max_iter"])
            return {"n_space": n_space, "n_time": n_time,
                    "sup_gap_U": float(np.max(np.abs(sol.u.values[0]))), "c_gap": 0.0}
        rep = toy_cross_check(m0, g, K=cfg["K"], tol=cfg.tol("toy"), mfg_tol=cfg.tol("mfg"),
                              damping=cfg["damping"])
        return {"n_space": n_space, "n_time": n_time, "sup_gap_U": rep["sup_gap_U"],
                "c_gap": rep["c_gap"], "c_series": rep["c_series"], "c_mfg": rep["c_mfg"]}

    return pool_map(one, cfg["refinement"], cfg["workers"])


def empirical_ladder(m0, sol, coeff, ladder, seeds, dt, workers=1):
    """Mean flat distance between the empirical and FP measures at ``T``."""
    from .particles import Policy, empirical_vs_fp, simulate_n_players

    grid = sol.grid
    pol = Policy.mean_field(sol, coeff)

    def one(job):
        N, seed = job
        run = simulate_n_players(N, m0, pol, coeff.sigma, grid.t0, grid.T, dt, seed,
                                 record_stride=10 ** 9)
        return empirical_vs_fp(run, sol.m, [grid.T])[0]

    jobs = [(N, s) for N in ladder for s in seeds]
    dists = np.array(pool_map(one, jobs, workers)).reshape(len(ladder), len(seeds))
    return dists.mean(axis=1), dists


def _empirical(cfg):
    g = cfg.grid()
    m0 = cfg.measure()
    coeff = cfg.coeff()
    sol = solve_mfg(m0, cfg.coupling(), g, coeff, damping=cfg["damping"], tol=cfg.tol("mfg"),
                    max_iter=cfg["max_iter"])
    mean, _ = empirical_ladder(m0, sol, coeff, cfg["N_ladder"], cfg["seeds"],
                               cfg["dt_particles"], cfg["workers"])
    out = {"N": list(cfg["N_ladder"]), "err": mean.tolist(), "slope": None, "r2": None}
    try:
        fit = fit_rate(cfg["N_ladder"], mean)
        out.update(slope=fit.slope, intercept=fit.intercept, r2=fit.r2, constant=fit.constant)
    except PreconditionError:
        pass
    return out


def nash_report(cfg, n_space, n_time, samples, seed=0):
    """Projection gap, Nash residual and the L1(m0) gap of the averaged Nash value."""
    from .nash_small import (build_projection, nash_residual, projection_gap,
                             solve_nash_two_player, w_average)

    g = cfg.grid(n_space, n_time)
    coupling, coeff = cfg.coupling(), cfg.coeff()
    kw = dict(damping=cfg["damping"], tol=cfg.tol("mfg"), max_iter=cfg["max_iter"])
    nash = solve_nash_two_player(coupling, g, coeff)
    proj = build_projection(coupling, g, coeff, time_index=(0, 1), keep_solutions=True, **kw)
    gap = projection_gap(nash, proj)
    res = nash_residual(proj, coupling, coeff, **kw)
    m0 = cfg.measure(n_space=n_space)
    w, _ = w_average(nash, m0, seed=seed, n_samples=samples)
    U = solve_mfg(m0, coupling, g, coeff, **kw).u.values[0]
    if m0.is_grid:
        wl1 = float(np.sum(np.abs(w - U)[1:-1] * m0.values[1:-1]) * g.dx)
    else:
        wl1 = float(np.sum(m0.weights * np.abs(np.interp(m0.positions, g.x, w - U))))
    return {"n_space": n_space, "n_time": n_time, "projection_gap": gap, "nash_residual": res,
            "w_L1": wl1}


def _nash(cfg):
    levels = cfg["nash"]["levels"]
    samples = cfg["nash"]["samples"]
    seed = cfg["seeds"][0] if cfg["seeds"] else 0
    return pool_map(lambda lv: nash_report(cfg, lv[0], lv[1], samples, seed), levels,
                    cfg["workers"])


def _write_rates_csv(path, summary):
    rows = []
    for r in summary.get("toy_refinement", []):
        rows.append(("toy_refinement", r["n_space"], r["sup_gap_U"]))
    emp = summary.get("empirical_rate")
    if emp:
        rows += [("empirical_rate", n, e) for n, e in zip(emp["N"], emp["err"])]
    for r in summary.get("nash2", []):
        rows.append(("nash2_projection_gap", r["n_space"], r["projection_gap"]))
        rows.append(("nash2_residual", r["n_space"], r["nash_residual"]))
        rows.append(("nash2_w_L1", r["n_space"], r["w_L1"]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["study", "level", "value"])
        for study, level, value in rows:
            w.writerow([study, int(level), f"{value:.17g}"])


def read_rates_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        return [(s, int(l), float(v)) for s, l, v in rd]


def _write_svg(path, summary):
    series = []
    emp = summary.get("empirical_rate")
    if emp and emp["N"]:
        series.append(("flat distance, empirical vs FP", emp["N"], emp["err"], "points"))
        if emp.get("slope") is not None:
            N = np.asarray(emp["N"], dtype=float)
            series.append((f"fit slope {emp['slope']:.3f}", N,
                           np.exp(emp["intercept"]) * N ** emp["slope"], "line"))
        ref = np.asarray(emp["N"], dtype=float)
        series.append(("N^-1/2", ref, emp["err"][0] * (ref / ref[0]) ** -0.5, "dashed"))
    svg.write(path, series, title="Empirical measure convergence", xlabel="N",
              ylabel="mean flat distance at T", logx=True, logy=True)


def run_convergence_study(config, out_dir=None):
    """Run the three sub-studies and emit rates.csv, summary.json, rates.svg.

    A failing sub-study stops the run; everything computed so far is still
    written, with ``status = "failed"`` in the summary.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    out_dir = out_dir or cfg["output"]
    os.makedirs(out_dir, exist_ok=True)
    echo = cfg.to_dict()
    echo.pop("output", None)  # keeps artifacts identical across output directories
    summary = {"status": "failed", "completed": [], "error": None, "config": echo}
    steps = [("toy_refinement", _toy_refinement), ("empirical_rate", _empirical),
             ("nash2", _nash)]
    try:
        for name, fn in steps:
            summary[name] = fn(cfg)
            summary["completed"].append(name)
        summary["status"] = "complete"
    except MFGAbsorbError as exc:
        summary["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        _write_rates_csv(os.path.join(out_dir, "rates.csv"), summary)
        _write_svg(os.path.join(out_dir, "rates.svg"), summary)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return summary


def validate_summary(summary):
    jsonschema.validate(summary, SUMMARY_SCHEMA)


def flat_distance_from_config(cfg):
    n = cfg["grid"]["n_space"]
    return flat_distance(parse_measure(cfg["m1"], n), parse_measure(cfg["m2"], n))
