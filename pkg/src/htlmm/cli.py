"""Command line interface: ``htlmm run|stability|marginal|info``.

Exit status is 0 on success, 2 for configuration errors and 3 when a dense
object would exceed the memory budget.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from . import checkpoint
from .config import load_config, preset_names
from .errors import BudgetExceededError, ConfigError
from .experiments import cmd_run, cmd_stability, fmt, info_text, marginal_rows

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3

FULL_WARNING = (
    "warning: --full selects full-scale parameters; expect runtimes of hours "
    "and large memory use"
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--config",
        required=True,
        metavar="PATH",
        help=f"config file or preset name ({', '.join(preset_names())})",
    )
    p.add_argument("--out", default="out", metavar="DIR", help="output directory (default: out)")
    p.add_argument("--full", action="store_true", help="apply the [full] overrides (full scale)")
    p.add_argument("--seed", type=int, default=0, metavar="N", help="seed for random initial data")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htlmm", description="Rank-truncated linear multistep integration on hierarchical Tucker tensors."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a PDE and write record.csv plus checkpoints")
    _add_common(p)

    p = sub.add_parser("stability", help="companion norm traces or CFL sweeps")
    _add_common(p)

    p = sub.add_parser("marginal", help="one-dimensional marginal of a checkpoint as CSV")
    p.add_argument("checkpoint", metavar="CHECKPOINT")
    p.add_argument("--mode", type=int, default=1, help="mode to keep, 1-based (default 1)")
    p.add_argument("--length", type=float, default=2 * math.pi, help="domain length per mode (default 2*pi)")
    p.add_argument("--out", default=None, metavar="DIR", help="write marginal_mode<K>.csv here instead of stdout")

    p = sub.add_parser("info", help="tree, hierarchical sizes and storage of a checkpoint")
    p.add_argument("checkpoint", metavar="CHECKPOINT")
    return parser


def _marginal(args) -> None:
    X = checkpoint.load(args.checkpoint)
    try:
        rows = marginal_rows(X, args.mode, args.length)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["x", "density"])
        w.writerows([[fmt(v) for v in r] for r in rows])
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"marginal_mode{args.mode}.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x", "density"])
        w.writerows([[fmt(v) for v in r] for r in rows])


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("run", "stability"):
            if args.full:
                print(FULL_WARNING, file=sys.stderr)
            cfg = load_config(args.config, full=args.full)
            out = Path(args.out)
            if args.command == "run":
                cmd_run(cfg, out, args.seed)
            else:
                cmd_stability(cfg, out, args.seed)
            print(f"wrote results to {out}")
        elif args.command == "marginal":
            _marginal(args)
        else:
            print(info_text(checkpoint.load(args.checkpoint)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceededError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (OSError, ValueError) as exc:
        if args.command in ("marginal", "info"):
            print(f"cannot read checkpoint: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
