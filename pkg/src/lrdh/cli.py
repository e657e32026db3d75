"""Command line entry point.

    lrdh <experiment> [--config FILE] [--seed N] [--out DIR]
                      [--preset smoke|full] [--threads K]

Exit code 0 when every gate passes, 2 on gate failure, 1 on error.
``LRDH_THREADS`` is honored when --threads is not given.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, PRESETS, make_config, parse_config_file
from .errors import LrdhError
from .experiments import run_experiment


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        raise LrdhError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lrdh", description=__doc__)
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", help="output directory (default lrdh-out/<experiment>)")
    parser.add_argument("--preset", choices=PRESETS, default="full")
    parser.add_argument("--threads", type=int, help="worker threads (0 = auto)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = parse_config_file(args.config) if args.config else {}
        cfg = make_config(
            args.experiment,
            file_overrides=overrides,
            preset=args.preset,
            seed=args.seed,
            out=args.out,
            threads=args.threads,
        )
        report = run_experiment(cfg)
        outdir = cfg.out or f"lrdh-out/{cfg.experiment}"
        paths = report.write(outdir)
        for gate in report.gates:
            status = "PASS" if gate.passed else "FAIL"
            print(f"[{status}] {gate.gate_id}: {gate.description} "
                  f"(value={gate.value:.6g}, target {gate.target})")
        print(f"report written to {paths['summary'].parent}")
        return 0 if report.passed else 2
    except (LrdhError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
