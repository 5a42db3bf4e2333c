"""Command line: ``gnnbandit <verb> --config PATH --out DIR --seed N``.

Exit codes: 0 success, 2 configuration error, 3 non-finite numbers,
4 a monitored bound was violated.
"""

from __future__ import annotations

import argparse
import sys

from .bandits import BanditError
from .experiments import ConfigError, MonitorViolation, load_config, run_experiment
from .gcn import NumericError

VERBS = ("approx-error", "norm-bias", "train", "regret", "budget-monitor", "synth-graph")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MONITOR = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnnbandit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="INI file with [graph] [model] [sampler] [run]")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        run_experiment(args.verb, cfg, args.out, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError, BanditError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MonitorViolation as exc:
        print(f"monitor violation: {exc}", file=sys.stderr)
        return EXIT_MONITOR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
