"""Command-line entry point.

Usage::

    marginal-selftest w3 --eps 0 0.005 0.01 --out results/w3
    marginal-selftest tibell --workers 4 --out results/tibell
    marginal-selftest --config run.json --tol-gap 1e-7
    marginal-selftest export-sdpa --experiment w3 --eps 0 --export-sdpa w3.dat-s
    marginal-selftest oracle-check

A JSON configuration (see :class:`~.experiments.ExperimentConfig`) supplies
defaults; every flag given on the command line overrides the matching key.
The exit status is 0 only when every row reached optimal status (every check
passed for ``oracle-check``), 1 otherwise, and 2 for invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checks import format_table, oracle_check
from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, build_problems, export_problems, run

COMMANDS = EXPERIMENTS + ("oracle-check", "export-sdpa", "run")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="marginal-selftest",
                                description="Device-independent fidelity bounds from marginal correlators.")
    p.add_argument("command", nargs="?", choices=COMMANDS, default="run",
                   help="experiment to run, 'oracle-check', 'export-sdpa', or 'run' (experiment from --experiment "
                        "or the configuration file)")
    p.add_argument("--config", type=Path, help="JSON experiment configuration")
    p.add_argument("--experiment", choices=EXPERIMENTS, help="experiment for 'run' and 'export-sdpa'")
    p.add_argument("--eps", type=float, nargs="+", help="noise levels")
    p.add_argument("--lambda", dest="lambdas", type=float, nargs="+", help="psi_lambda weights")
    p.add_argument("--violation", dest="violations", type=float, nargs="+", help="Bell values for tibell")
    p.add_argument("--bodies", type=int, nargs="+", choices=(2, 3), help="body limits for w4")
    p.add_argument("--no-symmetrize", dest="symmetrize", action="store_false", default=None,
                   help="do not reduce by the party symmetry")
    p.add_argument("--max-parties", type=int, help="basis override: parties per monomial")
    p.add_argument("--basis-manifest", help="reuse the basis stored in a manifest")
    p.add_argument("--tol-gap", type=float, help="relative duality gap tolerance")
    p.add_argument("--tol-feas", type=float, help="feasibility tolerance")
    p.add_argument("--workers", type=int, help="concurrent sweep points")
    p.add_argument("--directions", type=int, help="slice fan size")
    p.add_argument("--bisection-tol", type=float, help="slice bisection tolerance in t")
    p.add_argument("--out", help="output directory")
    p.add_argument("--export-sdpa", help="write problems in SDPA sparse format to this path")
    p.add_argument("--random-count", type=int, default=100, help="oracle-check random realizations")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return p


OVERRIDES = ("eps", "lambdas", "violations", "bodies", "symmetrize", "tol_gap", "tol_feas", "workers",
             "directions", "bisection_tol", "out", "export_sdpa")


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge the configuration file, the subcommand and the flags."""
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    if args.command in EXPERIMENTS:
        if args.experiment and args.experiment != args.command:
            raise ConfigError(f"--experiment {args.experiment} conflicts with subcommand {args.command}")
        data["experiment"] = args.command
    elif args.experiment:
        data["experiment"] = args.experiment
    for key in OVERRIDES:
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    basis = dict(data.get("basis", {}))
    if args.max_parties is not None:
        basis["max_parties"] = args.max_parties
    if args.basis_manifest:
        basis["manifest"] = args.basis_manifest
    if basis:
        data["basis"] = basis
    return ExperimentConfig.from_json(data)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.8g}"
    return "" if v is None else str(v)


def print_table(table) -> None:
    keys = list(table.rows[0].params) if table.rows else []
    head = keys + [table.value_name, "status", "rel_gap", "certificate"]
    print("  ".join(head))
    for r in table.rows:
        cert = "-" if r.certificate_passed is None else ("pass" if r.certificate_passed else "FAIL")
        print("  ".join([_fmt(r.params[k]) for k in keys] + [_fmt(r.value), r.status, f"{r.relative_gap:.1e}", cert]))


def _export(cfg: ExperimentConfig) -> int:
    target = cfg.export_sdpa or (str(Path(cfg.out) / f"{cfg.experiment}.dat-s") if cfg.out else None)
    if not target:
        raise ConfigError("export-sdpa needs --export-sdpa PATH or --out DIR")
    problems = build_problems(cfg)
    written = export_problems(target, [prob for _, prob in problems])
    for dest, (params, prob) in zip(written, problems):
        print(f"{dest}  {json.dumps(params)}  variables={prob.num_vars}  blocks={[b.size for b in prob.blocks]}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "oracle-check":
        results = oracle_check(args.random_count)
        print(format_table(results))
        return 0 if all(r.passed for r in results) else 1
    try:
        cfg = make_config(args)
        if args.command == "export-sdpa":
            return _export(cfg)
        table = run(cfg)
    except (ConfigError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print_table(table)
    if cfg.out:
        print(f"results written to {cfg.out}")
    return 0 if table.all_optimal else 1


if __name__ == "__main__":
    sys.exit(main())
