"""Command line entry point: ``odt simulate|campaign|rate-analysis|validate``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from .experiments import ConfigError, generate_scenario, load_config, replication_rngs, run_campaign
from .mechanism import run_mechanism
from .rate_analysis import tradeoff_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

log = logging.getLogger("odtmarket")


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    scen_rng, pol_ss = replication_rngs(cfg.seed, 0)
    scenario = generate_scenario(cfg, scen_rng)
    policies = cfg.policies()
    if args.policy not in policies:
        raise ConfigError(f"unknown policy {args.policy!r}")
    outcome = run_mechanism(scenario, policies[args.policy], np.random.default_rng(pol_ss))
    for route in outcome.final_routes:
        route.check(scenario.travel)
    out = outcome.to_dict()
    if not args.trace:
        out.pop("trace")
    out["policy"] = args.policy
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def _cmd_campaign(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    n_values = [int(v) for v in args.n_values.split(",")] if args.n_values else None
    report = run_campaign(cfg, args.reps, n_values)
    report.write(args.out)
    log.info("wrote %s/report.csv and report.json", args.out)
    return EXIT_OK


def _cmd_rate_analysis(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows = tradeoff_table(args.lam, args.zeta, args.nu, args.t_min, args.t_max, args.points,
                          args.mc_samples, rng)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) for k, v in row.items()})
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"ok: {args.config} (mode={cfg.mode}, N={cfg.n_passengers}, K={cfg.n_vehicles})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="odt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="single mechanism run, JSON outcome on stdout")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--policy", default="optimized", choices=("optimized", "hard", "fixed"))
    p.add_argument("--trace", action="store_true", help="include the stage-by-stage trace")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("campaign", help="Monte Carlo campaign, writes report.csv and report.json")
    p.add_argument("--config", required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-values", help="comma separated passenger counts (default: config value)")
    p.set_defaults(func=_cmd_campaign)

    p = sub.add_parser("rate-analysis", help="ignore/overtime tradeoff CSV")
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="per minute")
    p.add_argument("--zeta", type=float, required=True, help="points per km^2")
    p.add_argument("--nu", type=float, required=True, help="vehicle speed, km/h")
    p.add_argument("--t-min", type=float, required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--mc-samples", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rate_analysis)

    p = sub.add_parser("validate", help="check a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if args.command == "rate-analysis":
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise
    except AssertionError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
