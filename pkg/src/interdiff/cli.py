"""Command-line interface: validate, tabulate, simulate, estimate, solve, check.

Exit codes: 0 success / all checks passed, 1 violations or failed checks,
2 configuration errors.  All artifacts are CSV with headers and floats
printed to 17 significant digits, so re-runs with the same seed produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chain import build_grid, chain_parameters
from .checks import fmt, run_checks, write_csv
from .config import parse_config
from .errors import ConfigError, DomainError, EstimationError, SolverError
from .fpe import p_from_q, solve_forward
from .localtime import (convert_lt, default_epsilons, estimate_ratio,
                        nlt_estimate, nodes_for_probe)
from .medium import coeff_at, validate_model
from .paths import load_ensemble, save_ensemble, simulate_paths
from .scale import ScaleSpeed


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="medium/experiment JSON file")
    sub.add_argument("--out", default=None, help="output directory (default out/<plan>)")
    sub.add_argument("--seed", type=int, default=None, help="override the plan seed")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker threads for path generation")


def _out_dir(args, plan_name: str) -> Path:
    out = Path(args.out) if args.out else Path("out") / plan_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _engine_args(args, plan):
    eng = plan.engine if plan else None

    def pick(flag, fallback, cast=float):
        if flag is not None:
            return cast(flag)
        if fallback is None:
            raise ConfigError("missing engine setting: pass the flag or add an "
                              "experiment section to the config")
        return fallback

    h = pick(args.h, eng.h if eng else None)
    t = pick(args.t, eng.t if eng else None)
    paths = pick(args.paths, eng.paths if eng else None, int)
    seed = args.seed if args.seed is not None else (eng.seed if eng else 0)
    start = pick(args.start, eng.start if eng else 0.0)
    mode = args.mode or (eng.mode if eng else "fixed")
    return h, t, paths, seed, start, mode


def cmd_validate(args) -> int:
    spec, _ = parse_config(args.config, require_valid=False)
    report = validate_model(spec)
    print(report.summary())
    for key, value in sorted(report.info.items()):
        print(f"info {key}: {value}")
    return 0 if report.ok else 1


def cmd_tabulate_scale(args) -> int:
    spec, plan = parse_config(args.config)
    scale = ScaleSpeed(spec)
    xs = np.union1d(np.linspace(*spec.window, args.points),
                    spec.interface_positions())
    rows = [[r["x"], r["s_prime_left"], r["s_prime_right"],
             r["m_prime_left"], r["m_prime_right"], r["s"]]
            for r in scale.tabulate(xs)]
    out = _out_dir(args, plan.name if plan else Path(args.config).stem)
    path = out / "scale.csv"
    write_csv(path, ["x", "s_prime_left", "s_prime_right",
                     "m_prime_left", "m_prime_right", "s"], rows)
    print(f"wrote {path}")
    return 0


def cmd_simulate(args) -> int:
    spec, plan = parse_config(args.config)
    h, t, paths, seed, start, mode = _engine_args(args, plan)
    scale = ScaleSpeed(spec)
    grid = build_grid(spec, h)
    chain = chain_parameters(spec, grid, scale)
    epsilons = (plan.estimator.epsilons if plan and plan.estimator.epsilons
                else default_epsilons(h))
    probe_xs = list(spec.interface_positions())
    if plan:
        probe_xs += list(plan.estimator.probes)
    tracked = np.empty(0, dtype=np.int64)
    for x in probe_xs:
        tracked = np.union1d(tracked, nodes_for_probe(grid.nodes, x, max(epsilons)))
    ens = simulate_paths(chain, start, t, paths, seed, mode,
                         tracked_nodes=tracked, trace=args.trace,
                         threads=args.threads)
    out = _out_dir(args, plan.name if plan else Path(args.config).stem)
    write_csv(out / "ensemble.csv",
              ["node_x", "total_occupation_time", "visit_count"],
              [[ens.nodes[k], ens.total_occupation[k], ens.visit_count[k]]
               for k in range(len(ens.nodes))])
    save_ensemble(ens, out / "ensemble.npz")
    if args.trace:
        rows = []
        for pid, (t_nodes, t_holds) in enumerate(ens.traces):
            rows += [[pid, int(n), ens.nodes[n], hold]
                     for n, hold in zip(t_nodes, t_holds)]
        write_csv(out / "traces.csv",
                  ["path", "node_index", "node_x", "holding_time"], rows)
    print(f"wrote {out / 'ensemble.csv'} and {out / 'ensemble.npz'} "
          f"({paths} paths, boundary fraction {fmt(ens.boundary_fraction)})")
    return 0


def _load_ensemble_arg(args):
    if not args.ensemble:
        raise ConfigError("--ensemble <file.npz> is required (written by simulate)")
    return load_ensemble(args.ensemble)


def cmd_localtime(args) -> int:
    spec, plan = parse_config(args.config)
    scale = ScaleSpeed(spec)
    ens = _load_ensemble_arg(args)
    if args.eps:
        epsilons = tuple(float(e) for e in args.eps.split(","))
    elif plan and plan.estimator.epsilons:
        epsilons = plan.estimator.epsilons
    else:
        raise ConfigError("--eps e1,e2,... is required without plan epsilons")
    rows = []
    for x in args.at:
        for side in ("left", "right"):
            est = nlt_estimate(ens, x, side, epsilons)
            for notion in ("nlt", "smlt", "dlt"):
                conv = convert_lt(est, notion, scale)
                for eps, val, se in zip(conv.epsilons, conv.ladder_values,
                                        conv.ladder_stderrs):
                    rows.append([x, side, eps, notion, val, se])
                rows.append([x, side, 0.0, notion, conv.value, conv.stderr])
    out = _out_dir(args, plan.name if plan else Path(args.config).stem)
    path = out / "localtime.csv"
    write_csv(path, ["x", "side", "epsilon", "notion", "value", "stderr"], rows)
    print(f"wrote {path}")
    return 0


def cmd_ratio(args) -> int:
    spec, plan = parse_config(args.config)
    scale = ScaleSpeed(spec)
    ens = _load_ensemble_arg(args)
    if args.eps:
        epsilons = tuple(float(e) for e in args.eps.split(","))
    elif plan and plan.estimator.epsilons:
        epsilons = plan.estimator.epsilons
    else:
        raise ConfigError("--eps e1,e2,... is required without plan epsilons")
    rows = []
    for j in range(spec.n_interfaces):
        rep = estimate_ratio(ens, scale, j, epsilons)
        rows.append([rep.interface_x, rep.predicted, rep.estimated, rep.half_width])
    out = _out_dir(args, plan.name if plan else Path(args.config).stem)
    path = out / "ratio.csv"
    write_csv(path, ["x_j", "predicted", "estimated", "half_width"], rows)
    print(f"wrote {path}")
    return 0


def cmd_pde(args) -> int:
    spec, plan = parse_config(args.config)
    sol = plan.solver if plan else None
    t = args.t if args.t is not None else (
        sol.t if sol and sol.t is not None else (plan.engine.t if plan else None))
    if t is None:
        raise ConfigError("--t is required without an experiment section")
    cells = args.cells if args.cells is not None else (sol.cells if sol else 1000)
    dt = args.dt if args.dt is not None else (sol.dt if sol else 1e-4)
    scheme = args.scheme or (sol.scheme if sol else "implicit-euler")
    if args.init.startswith("delta:"):
        x0 = float(args.init.split(":", 1)[1])
        initial = x0
    elif args.init.startswith("csv:"):
        path = args.init.split(":", 1)[1]
        initial = np.loadtxt(path, delimiter=",")
        x0 = float(spec.window[0])
    else:
        raise ConfigError(f"--init must be delta:<x0> or csv:<path>, got {args.init!r}")
    fld = solve_forward(spec, initial, t, cells, dt, scheme)
    p = p_from_q(fld, x0)
    mass0 = coeff_at(spec, x0, "left")[1] if np.isscalar(initial) else fld.mass
    out = _out_dir(args, plan.name if plan else Path(args.config).stem)
    path = out / "pde.csv"
    footer = (f"# mass_initial={fmt(mass0)} mass_final={fmt(fld.mass)} "
              f"mass_drift={fmt(fld.max_mass_drift)}")
    write_csv(path, ["cell_center", "u", "p", "eta"],
              [[fld.system.centers[i], fld.values[i], p[i], fld.system.eta_cell[i]]
               for i in range(fld.system.n_cells)], footer=footer)
    print(f"wrote {path} (mass drift {fmt(fld.max_mass_drift)})")
    return 0


def cmd_check(args) -> int:
    spec, plan = parse_config(args.config)
    if plan is None or not plan.checks:
        raise ConfigError("config has no experiment.checks to run")
    if args.seed is not None:
        from dataclasses import replace
        plan = replace(plan, engine=replace(plan.engine, seed=args.seed))
    out = _out_dir(args, plan.name)
    report = run_checks(spec, plan, out_dir=out, threads=args.threads)
    print(report.summary())
    print(f"artifacts in {out}")
    return 0 if report.all_passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="interdiff",
        description="Interfacial-diffusion laboratory: simulate the diffusion "
                    "of a divergence-form operator with discontinuous "
                    "coefficients, estimate its local times, and solve the "
                    "matching conservative forward PDE.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("validate", help="check the medium against its invariants")
    _common_flags(p)
    p.set_defaults(func=cmd_validate)

    p = subs.add_parser("tabulate-scale", help="emit scale/speed densities as CSV")
    _common_flags(p)
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(func=cmd_tabulate_scale)

    p = subs.add_parser("simulate", help="run the path ensemble")
    _common_flags(p)
    p.add_argument("--h", type=float, default=None, help="grid spacing")
    p.add_argument("--t", type=float, default=None, help="time horizon")
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--start", type=float, default=None)
    p.add_argument("--mode", choices=["fixed", "exp"], default=None)
    p.add_argument("--trace", type=int, default=0,
                   help="dump full traces for the first N paths")
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("localtime", help="estimate local time at probe points")
    _common_flags(p)
    p.add_argument("--ensemble", default=None, help="ensemble.npz from simulate")
    p.add_argument("--at", type=float, action="append", required=True,
                   help="probe coordinate (repeatable)")
    p.add_argument("--eps", default=None, help="comma-separated window widths")
    p.set_defaults(func=cmd_localtime)

    p = subs.add_parser("ratio", help="interface jump-ratio report")
    _common_flags(p)
    p.add_argument("--ensemble", default=None)
    p.add_argument("--eps", default=None)
    p.set_defaults(func=cmd_ratio)

    p = subs.add_parser("pde", help="solve the forward interface problem")
    _common_flags(p)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--init", default="delta:0.0",
                   help="delta:<x0> or csv:<path-with-cell-values>")
    p.add_argument("--scheme", choices=["implicit-euler", "crank-nicolson"],
                   default=None)
    p.set_defaults(func=cmd_pde)

    p = subs.add_parser("check", help="run the plan's cross-validation checks")
    _common_flags(p)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, EstimationError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
