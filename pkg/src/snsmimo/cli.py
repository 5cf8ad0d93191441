"""Command line front-end.

Two subcommands:

- ``snsmimo sweep``: Monte-Carlo sum-rate sweep over transmit powers.
- ``snsmimo converge``: averaged per-iteration trace of the SCA loop.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
failures.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .harness import ConfigError, SweepSpec, parse_config_file, run_convergence, run_sweep


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma list of numbers, got {text!r}") from exc


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip() != "")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snsmimo",
        description="Downlink MU-MIMO rate-splitting simulator with successive null-space precoding",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="Monte-Carlo sum-rate sweep over transmit powers")
    sweep.add_argument("--config", required=True, help="system configuration file")
    sweep.add_argument(
        "--pt-dbm",
        type=_float_list,
        default=(0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0),
        help="comma list of transmit powers in dBm",
    )
    sweep.add_argument(
        "--schemes",
        type=_str_list,
        default=("sns", "bd", "dpc"),
        help="comma list from {sns,bd,dpc}",
    )
    sweep.add_argument("--trials", type=int, default=500, help="maximum trials per point")
    sweep.add_argument("--ci", type=float, default=0.5, help="target CI half-width, bits")
    sweep.add_argument("--confidence", type=float, default=0.95, help="confidence level")
    sweep.add_argument("--seed", type=int, default=0, help="master seed")
    sweep.add_argument("--workers", type=int, default=1, help="worker processes")
    sweep.add_argument("--out", required=True, help="output CSV path")

    conv = sub.add_parser("converge", help="averaged SCA convergence trace")
    conv.add_argument("--config", required=True, help="system configuration file")
    conv.add_argument("--pt-dbm", type=float, default=20.0, help="transmit power in dBm")
    conv.add_argument("--seed", type=int, default=0, help="master seed")
    conv.add_argument("--realizations", type=int, default=20, help="channel draws to average")
    conv.add_argument("--out", required=True, help="output CSV path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = parse_config_file(args.config, seed=args.seed)
        if args.command == "sweep":
            spec = SweepSpec(
                config=config,
                pt_dbm=args.pt_dbm,
                schemes=args.schemes,
                max_trials=args.trials,
                ci_half_width=args.ci,
                confidence=args.confidence,
                seed=args.seed,
                workers=args.workers,
                out_path=args.out,
            )
            run_sweep(spec)
        else:
            run_convergence(
                config,
                pt_dbm=args.pt_dbm,
                seed=args.seed,
                realizations=args.realizations,
                out_path=args.out,
            )
    except ConfigError as exc:
        print(f"snsmimo: configuration error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"snsmimo: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
