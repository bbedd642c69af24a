"""Command line entry point: ``volterra-kit run|converge|validate <config.json>``.

Exit codes: 0 all checks pass, 1 a tolerance check failed, 2 configuration or model
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments
from .config import load_config
from .errors import (
    ConfigError,
    DegenerateDiffusion,
    DimensionMismatch,
    InvalidHorizon,
    InvalidMVModel,
    InvalidSpatialGrid,
    InvalidStateModel,
    VolterraError,
)

EXIT_PASS, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
_CONFIG_ERRORS = (
    ConfigError, InvalidHorizon, InvalidSpatialGrid, InvalidStateModel, InvalidMVModel,
    DegenerateDiffusion, DimensionMismatch,
)


def _levels(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _threads(text: str) -> int:
    k = int(text)
    if k < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    return k


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volterra-kit",
        description="Run BSVIE, PDE and mean-variance experiments described by JSON configs.",
        epilog="exit codes: 0 pass, 1 tolerance failure, 2 config/model error, 3 numerical failure",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="experiment JSON file (bundled examples are found by name)")
        p.add_argument("--threads", type=_threads, default=1, help="worker threads (results do not depend on it)")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: the config's 'output')")

    p_run = sub.add_parser("run", help="run an experiment and write CSV artifacts plus a summary")
    common(p_run)
    p_run.add_argument("--dump-paths", type=int, nargs="?", const=1000, default=None, metavar="K",
                       help="also write the first K simulated paths to ensemble.csv (default K=1000)")
    p_conv = sub.add_parser("converge", help="grid-refinement study")
    common(p_conv)
    p_conv.add_argument("--levels", type=_levels, default=None, help="comma-separated step counts, e.g. 25,50,100")
    p_val = sub.add_parser("validate", help="parse the config and check the model without solving")
    p_val.add_argument("config")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            for line in experiments.validate_config(cfg):
                print(line)
            print("config ok")
            return EXIT_PASS
        out = args.out if args.out is not None else Path(cfg.output)
        if args.command == "run":
            rep = experiments.run(cfg, out, workers=args.threads, dump_paths=args.dump_paths)
        else:
            out.mkdir(parents=True, exist_ok=True)
            experiments.validate_config(cfg)
            rep = experiments.convergence_study(cfg, args.levels, out=out, workers=args.threads)
            rep.write(out)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VolterraError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(rep.summary(), end="")
    return EXIT_PASS if rep.passed else EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
