"""Command line entry point ``mfgabsorb``.

Exit codes: 0 success, 2 precondition or configuration error, 3 a
fixed-point iteration did not converge.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import ConvergenceError, PreconditionError

SUBCOMMANDS = {"solve-mfg": "mfg", "toy": "toy", "simulate": "simulate", "nash2": "nash2",
               "converge": "converge", "flat-distance": "flat-distance"}


def _g(v):
    return f"{v:.17g}"


def _emit(fields):
    for k, v in fields.items():
        if isinstance(v, (float, np.floating)):
            v = _g(float(v))
        print(f"{k} = {v}")


def _load(args, kind):
    from .harness import ExperimentConfig

    if args.config is None:
        raise PreconditionError("--config is required (or use --example-config)")
    cfg = ExperimentConfig.from_json(args.config)
    if cfg["experiment"] != kind:
        raise PreconditionError(f"config is for {cfg['experiment']!r}, not {kind!r}")
    if args.seed is not None:
        cfg.data["seeds"] = [args.seed]
    if args.out is not None:
        cfg.data["output"] = args.out
    return cfg


def _solve_kw(cfg):
    return dict(damping=cfg["damping"], tol=cfg.tol("mfg"), max_iter=cfg["max_iter"])


def cmd_solve_mfg(cfg, args):
    from .mfg import solve_mfg

    sol = solve_mfg(cfg.measure(), cfg.coupling(), cfg.grid(), cfg.coeff(), **_solve_kw(cfg))
    sol.to_directory(cfg["output"], cfg.to_dict())
    _emit({"iterations": sol.iterations, "final_u_residual": sol.u_residuals[-1],
           "final_m_residual": sol.m_residuals[-1], "U(t0,0.5)": sol.U(0.5),
           "mass(T)": sol.mass[-1]})


def cmd_toy(cfg, args):
    from . import svg
    from .pde1d import SpaceTimeField
    from .toy_model import sine_coefficients, series_U, toy_fixed_point

    g = cfg.grid()
    toy = toy_fixed_point(cfg.measure(), g, tol=cfg.tol("toy"), max_iter=cfg["max_iter"],
                          K=cfg["K"])
    out = cfg["output"]
    os.makedirs(out, exist_ok=True)
    b = toy.coefficients
    xs = g.x
    fields = {"c_star": toy.c_star, "K": toy.K}
    if args.bk_literal:
        b_lit = sine_coefficients(toy.c_star, cfg["K"], literal=True)
        u_T = series_U(toy.c_star, g.T, xs, cfg["K"], g.T, coefficients=b_lit)
        fields["bk_variant"] = "literal"
        fields["terminal_check_error"] = float(np.max(np.abs(u_T - xs * (1 - xs) * toy.c_star)))
        b = b_lit
    else:
        u_T = series_U(toy.c_star, g.T, xs, cfg["K"], g.T, coefficients=b)
        fields["bk_variant"] = "corrected"
        fields["terminal_check_error"] = float(np.max(np.abs(u_T - xs * (1 - xs) * toy.c_star)))
    np.savetxt(os.path.join(out, "bk.csv"), np.column_stack([np.arange(1, b.size + 1), b]),
               delimiter=",", header="k,b_k", comments="", fmt=["%d", "%.17g"])
    U = np.array([series_U(toy.c_star, t, xs, cfg["K"], g.T, coefficients=b) for t in g.t])
    SpaceTimeField(U, g).to_csv(os.path.join(out, "U.csv"))
    svg.write(os.path.join(out, "U_t0.svg"), [("U(t0, x)", xs, U[0], "line")],
              title="Toy value function at t0", xlabel="x", ylabel="U")
    _emit(fields)


def cmd_simulate(cfg, args):
    from .mfg import solve_mfg
    from .particles import Policy, evaluate_cost, simulate_n_players

    g, coeff, coupling = cfg.grid(), cfg.coeff(), cfg.coupling()
    m0 = cfg.measure()
    if cfg["policy"] == "mean_field":
        sol = solve_mfg(m0, coupling, g, coeff, **_solve_kw(cfg))
        pol = Policy.mean_field(sol, coeff)
    else:
        pol = Policy.constant(0.0)
    seed = cfg["seeds"][0] if cfg["seeds"] else 0
    run = simulate_n_players(cfg["N"], m0, pol, coeff.sigma, g.t0, g.T, cfg["dt_particles"],
                             seed, record_stride=max(1, int(round(g.dt / cfg["dt_particles"]))))
    costs = evaluate_cost(run, pol, coupling)
    out = cfg["output"]
    os.makedirs(out, exist_ok=True)
    run.to_files(os.path.join(out, "paths.csv"), os.path.join(out, "run.json"))
    with open(os.path.join(out, "costs.json"), "w") as fh:
        json.dump({"costs": costs.tolist()}, fh, indent=2)
    _emit({"N": cfg["N"], "seed": seed, "mean_cost": float(costs.mean()),
           "surviving_fraction": float(run.mass_trace[-1])})


def cmd_nash2(cfg, args):
    from .nash_small import (build_projection, exchangeability_defect, projection_gap,
                             slice_identity_defect, solve_nash_two_player)

    g, coeff, coupling = cfg.grid(), cfg.coeff(), cfg.coupling()
    nash = solve_nash_two_player(coupling, g, coeff)
    nash.to_directory(cfg["output"])
    proj = build_projection(coupling, g, coeff, **_solve_kw(cfg))
    _emit({"slice_defect": slice_identity_defect(nash, coupling, coeff),
           "exchangeability_defect": exchangeability_defect(nash),
           "projection_gap": projection_gap(nash, proj)})


def cmd_converge(cfg, args):
    from .harness import run_convergence_study

    summary = run_convergence_study(cfg, cfg["output"])
    emp = summary["empirical_rate"]
    _emit({"status": summary["status"], "empirical_slope":
           emp["slope"] if emp["slope"] is None else float(emp["slope"]),
           "output": cfg["output"]})


def cmd_flat(cfg, args):
    from .harness import flat_distance_from_config

    _emit({"flat_distance": float(flat_distance_from_config(cfg))})


HANDLERS = {"solve-mfg": cmd_solve_mfg, "toy": cmd_toy, "simulate": cmd_simulate,
            "nash2": cmd_nash2, "converge": cmd_converge, "flat-distance": cmd_flat}


def build_parser():
    p = argparse.ArgumentParser(prog="mfgabsorb",
                                description="Mean-field games with absorbing boundaries.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON experiment configuration")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="RNG seed (overrides the config seeds)")
        sp.add_argument("--bk-literal", action="store_true",
                        help="toy: use the sine coefficients without the -1 correction")
        sp.add_argument("--example-config", action="store_true",
                        help="print an example configuration and exit")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    kind = SUBCOMMANDS[args.command]
    try:
        if args.example_config:
            from .harness import example_config

            print(json.dumps(example_config(kind), indent=2, sort_keys=True))
            return 0
        cfg = _load(args, kind)
        HANDLERS[args.command](cfg, args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
