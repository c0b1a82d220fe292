"""Run every config in a directory and print a one-line report per experiment.

    python scripts/run_all.py                      # configs/*.json, full size
    python scripts/run_all.py --replicates 10      # quick pass with fewer disorders
"""

import argparse
import pathlib
import time

from brwtree.harness.config import ExperimentConfig
from brwtree.harness.runner import format_report, run, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="?", default="configs", help="directory of JSON configs")
    ap.add_argument("--replicates", type=int, help="override the replicate count where the experiment has one")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results", help="output directory")
    args = ap.parse_args()

    for path in sorted(pathlib.Path(args.configs).glob("*.json")):
        cfg = ExperimentConfig.load(path)
        over = {"workers": args.workers, "out": str(pathlib.Path(args.out) / path.stem)}
        if args.replicates and "replicates" in cfg.params:
            over["replicates"] = args.replicates
        cfg = cfg.with_overrides(**over)
        start = time.perf_counter()
        record = run(cfg)
        print(f"== {path.stem} ({time.perf_counter() - start:.1f}s)")
        print(format_report(summarize([record])))


if __name__ == "__main__":
    main()
