"""``clqg <experiment> --config FILE [--seed S] [--replicas R] [--out DIR]``.

Exit codes: 0 on completion, 1 for configuration errors, 2 for runtime errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from clqg.errors import ClqgError, ConfigError
from clqg.harness.config import EXPERIMENTS, load_config
from clqg.harness.output import run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clqg", description="Seeded experiments on the lattice critical chaos measure.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.add_argument("--seed", type=lambda s: int(s, 0), help="override the master seed")
    p.add_argument("--replicas", type=int, help="override the replica count")
    p.add_argument("--out", help="override the output directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.experiment!r}")
        cfg = cfg.with_overrides(seed=args.seed, replicas=args.replicas, output_dir=args.out)
    except (ConfigError, TypeError, ValueError) as exc:
        print(f"clqg: config error: {exc}", file=sys.stderr)
        return 1
    try:
        out = run_experiment(cfg)
    except ConfigError as exc:
        print(f"clqg: config error: {exc}", file=sys.stderr)
        return 1
    except (ClqgError, ValueError, ArithmeticError, MemoryError, KeyError, OSError) as exc:
        print(f"clqg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"experiment": cfg.experiment, "output_dir": cfg.output_dir,
                      "rows": len(out.rows)}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
