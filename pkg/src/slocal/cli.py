"""Command-line entry point ``slocal``.

Exit codes: 0 on success, 2 on invalid configuration, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from .concavity import A0Params, duality_holds, suggested_t0, t_p_t_q
from .harness import METRICS, ConfigError, grid_search, parse_config, run_experiment
from .presets import PresetError, get_grid, scheme_of
from .schedule import parse_schedule
from .slips import SlipsError
from .targets import make_target

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _add_sampler_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", help="gmm:<d>, 8gauss, rings, funnel, logreg:<path>[:fmt], phi4:<h>")
    p.add_argument("--algo", choices=["slips", "ideal", "ais", "smc"])
    p.add_argument("--ideal", action="store_true", help="shorthand for --algo ideal")
    p.add_argument("--schedule", help="standard, geom-inf:<a1> or geom:<a1>,<a2>")
    p.add_argument("--t0", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--k", dest="K", type=int, help="SDE steps (annealing levels for ais/smc)")
    p.add_argument("--mcmc-steps", dest="L", type=int, help="MALA steps per estimate or level")
    p.add_argument("--n-init", dest="n_init", type=int)
    p.add_argument("--runs", dest="n_runs", type=int, help="independent runs (particles for ais/smc)")
    p.add_argument("--seed", type=int)
    p.add_argument("--metrics", help=f"comma-separated subset of {','.join(METRICS)}")
    p.add_argument("--grid-mode", dest="grid_mode", choices=["snr", "uniform"])
    p.add_argument("--n-ref", dest="n_ref", type=int, help="exact reference samples for metrics")
    p.add_argument("--freeze-adaptation", dest="freeze_adaptation", action="store_true", default=None,
                   help="stop step-size adaptation during the retained MALA steps")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON file of settings")


def _flags(args, exclude=()) -> dict:
    keys = ["target", "algo", "schedule", "t0", "eta", "K", "L", "n_init", "n_runs", "seed",
            "metrics", "grid_mode", "n_ref", "out", "freeze_adaptation"]
    flags = {k: getattr(args, k, None) for k in keys if k not in exclude}
    if getattr(args, "ideal", False):
        flags["algo"] = "ideal"
    return flags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slocal", description="Stochastic localization samplers.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="sample, evaluate and write a run directory")
    run.add_argument("--preset", help="table4:<target>:<scheme>")
    _add_sampler_args(run)

    conc = sub.add_parser("concavity", help="log-concavity window (t_q, t_p) for a target")
    conc.add_argument("--target", required=True)
    conc.add_argument("--schedule", default="standard")
    conc.add_argument("--sigma", type=float, help="defaults to sqrt(R^2 + tau^2)")
    conc.add_argument("--weight", type=float, help="two-mode mixture weight w for the refined bound")

    grid = sub.add_parser("grid", help="rank (t0, eta) pairs by a metric")
    grid.add_argument("--preset", required=True, help="table3:<gmm|logreg|phi4|others>[:<scheme>]")
    grid.add_argument("--metric", required=True, choices=METRICS, help="ranking key")
    grid.add_argument("--t0s", help="comma-separated override of the preset t0 values")
    grid.add_argument("--etas", help="comma-separated override of the preset eta values")
    _add_sampler_args(grid)
    return parser


def _cmd_run(args) -> int:
    cfg = parse_config(_flags(args), file=args.config, preset=args.preset)
    art = run_experiment(cfg)
    print(f"config_hash {art.config_hash}")
    for r in art.metrics:
        print(f"{r['metric']:>18s}  {r['value']:.6g}  (n={r['n']})")
    n_failed = art.diagnostics["sampler"].get("n_failed", 0)
    if n_failed:
        print(f"{n_failed} runs failed numerically and were excluded")
    if art.out_dir is not None:
        print(f"wrote {art.out_dir}")
    return EXIT_OK


def _cmd_concavity(args) -> int:
    target = make_target(args.target)
    spec = parse_schedule(args.schedule)
    sigma = args.sigma if args.sigma is not None else target.sigma
    params = A0Params(target.dim, target.R, target.tau, sigma, args.weight)
    t_q, t_p = t_p_t_q(params, spec)
    holds = duality_holds(params)
    print(f"target {target.name}  d={params.d}  R={params.R_eff:.6g}  tau={params.tau:.6g}  sigma={sigma:.6g}")
    print(f"t_q {t_q:.6g}")
    print(f"t_p {t_p:.6g}")
    print(f"duality {'holds' if holds else 'not guaranteed'}")
    t0 = suggested_t0(params, spec)
    if t0 is not None:
        print(f"suggested t0 {t0:.6g}")
    elif holds:
        print("suggested t0: any t0 (both densities are log-concave on the whole window)")
    else:
        print("no guaranteed window; select t0 by grid search")
    return EXIT_OK


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()] if text else None


def _cmd_grid(args) -> int:
    flags = _flags(args)
    sched = flags.get("schedule")
    gp = get_grid(args.preset, scheme_of(sched) if sched else None)
    if sched and scheme_of(sched) is None:
        raise ConfigError("schedule", f"{sched!r} has no grid preset")
    flags["schedule"] = gp.schedule
    cfg = parse_config(flags, file=args.config)
    t0s = _floats(args.t0s) or gp.t0s
    etas = _floats(args.etas) or gp.etas
    rows = grid_search(cfg, t0s, etas, args.metric)
    print(f"{'rank':>4s}  {'t0':>6s}  {'eta':>5s}  {args.metric}")
    for r in rows:
        val = f"{r['value']:.6g}" if math.isfinite(r["value"]) else f"failed ({r['error']})"
        print(f"{r['rank']:>4d}  {r['t0']:>6g}  {r['eta']:>5g}  {val}")
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "grid.json").write_text(json.dumps({"preset": gp.name, "metric": args.metric, "rows": rows}, indent=2) + "\n")
        with open(out / "grid.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "t0", "eta", "value", "error"])
            for r in rows:
                w.writerow([r["rank"], r["t0"], r["eta"], r["value"], r["error"] or ""])
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "concavity": _cmd_concavity, "grid": _cmd_grid}[args.command]
    try:
        return handler(args)
    except (PresetError, ValueError) as exc:
        # ConfigError and ScheduleError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SlipsError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
