"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver
infeasibility that the requested experiment cannot work around.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .errors import ConfigError, DataError, InfeasibleError
from .experiments import KINDS, ExperimentConfig, LambdaGridSpec, run

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE = 0, 2, 3, 4


def parse_lambda_grid(text: str) -> LambdaGridSpec:
    """``"lo:hi"`` gives exponents of a sqrt(10)-spaced grid; otherwise a comma list of values."""
    try:
        if ":" in text:
            lo, hi = (float(p) for p in text.split(":"))
            return LambdaGridSpec(lo_exp=lo, hi_exp=hi)
        return LambdaGridSpec(values=[float(p) for p in text.split(",") if p.strip()])
    except ValueError as exc:
        raise ConfigError(f"bad --lambda-grid {text!r}: {exc}") from exc


def parse_k(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --k {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfdistill", description="Repeated self-distillation experiments for linear regression.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out-dir", help="directory for CSV/JSON outputs")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int, help="Monte-Carlo trials")
        p.add_argument("--lambda-grid", help='"lo_exp:hi_exp" or comma-separated values')
        p.add_argument("--k", help="comma-separated step counts")
        if kind in ("real-data", "tune"):
            p.add_argument("--dataset", help="preset name: air_quality, airfoil, aep")
            p.add_argument("--data-path", help="CSV file or directory holding it")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    payload = {}
    if args.config:
        payload = ExperimentConfig.from_json(args.config).to_dict()
        if payload["kind"] != args.command:
            raise ConfigError(f"config kind {payload['kind']!r} does not match command {args.command!r}")
    payload["kind"] = args.command
    if args.out_dir is not None:
        payload["out_dir"] = args.out_dir
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.trials is not None:
        payload["trials"] = args.trials
    if args.lambda_grid is not None:
        payload["lambda_grid"] = parse_lambda_grid(args.lambda_grid).__dict__
    if args.k is not None:
        payload["k_list"] = parse_k(args.k)
    for name in ("dataset", "data_path"):
        if getattr(args, name, None) is not None:
            payload[name] = getattr(args, name)
    return ExperimentConfig.from_dict(payload)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = make_config(args)
        summary = run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(json.dumps({"kind": config.kind, "out_dir": config.out_dir, **config.stamp()}))
    logging.getLogger(__name__).info("summary keys: %s", sorted(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
