"""Command-line entry point: ``scrambler-lab run|analyze|rg``."""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import AnalyzeConfig, ConfigError, RunConfig, analyze, run_experiment
from .rg import fixed_point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scrambler-lab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment grid from a TOML/JSON config")
    run.add_argument("config")
    run.add_argument("--threads", type=int, default=None,
                     help="worker processes (default: SCRAMBLER_THREADS or all cores)")
    run.add_argument("--output", default=None, help="override the config's output directory")
    run.add_argument("--quiet", action="store_true")
    an = sub.add_parser("analyze", help="fit crossings and collapses from run output")
    an.add_argument("config")
    rg = sub.add_parser("rg", help="solve the decimation fixed point")
    rg.add_argument("--tol", type=float, default=1e-12)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "rg":
            print(json.dumps(fixed_point(args.tol).to_dict()))
            return 0
        if args.command == "run":
            cfg = RunConfig.load(args.config)
            if args.output:
                cfg.output = args.output
            say = None if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
            summary = run_experiment(cfg, args.threads, say)
            print(json.dumps(summary))
            return 0
        results = analyze(AnalyzeConfig.load(args.config))
        print(json.dumps(results, indent=2))
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted: partial output kept, manifest marked incomplete", file=sys.stderr)
        return 130


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
