"""Command line: ``brw run <config>`` and ``brw summarize <summary.json>...``."""

from __future__ import annotations

import argparse
import json
import sys

from ..errors import DomainError, ResourceError
from .config import ExperimentConfig, ValidationError
from .runner import ResultRecord, format_report, run, summarize

EXIT_OK, EXIT_VALIDATION, EXIT_RESOURCE = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brw", description="Branching random walk experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config", help="JSON config file")
    r.add_argument("--N", type=int, help="tree depth")
    r.add_argument("--beta", type=float, help="inverse temperature")
    r.add_argument("--replicates", type=int, help="number of disorders")
    r.add_argument("--seed", type=int, help="base seed")
    r.add_argument("--out", help="output path stem (writes .csv and .json)")
    r.add_argument("--workers", type=int, help="worker processes")
    r.add_argument("--max-seconds", type=float, dest="max_seconds", help="runtime budget")

    s = sub.add_parser("summarize", help="aggregate JSON summaries of one experiment")
    s.add_argument("records", nargs="+", help="summary JSON files written by run")
    s.add_argument("--json", action="store_true", help="print the report as JSON")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = ExperimentConfig.load(args.config)
            cfg = cfg.with_overrides(N=args.N, beta=args.beta, replicates=args.replicates, seed=args.seed,
                                     out=args.out, workers=args.workers, max_seconds=args.max_seconds)
            record = run(cfg)
            print(record.summary_json(), end="")
            if not record.complete:
                print("warning: runtime budget exhausted, partial results", file=sys.stderr)
        else:
            report = summarize([ResultRecord.load(p) for p in args.records])
            print(json.dumps(report, indent=2, sort_keys=True) if args.json else format_report(report))
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except ResourceError as e:
        print(f"resource error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (DomainError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
