"""Run experiments, persist CSV rows and JSON summaries, aggregate across runs."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from .. import __version__
from ..barrier import loglog_fit
from ..errors import DomainError
from .config import ExperimentConfig, ValidationError, resolve
from .experiments import REGISTRY, non_increasing


@dataclass
class ResultRecord:
    config: ExperimentConfig
    rows: list[dict[str, Any]]
    summary: dict[str, Any]
    complete: bool = True
    runtime: float = 0.0
    columns: tuple[str, ...] = field(default=())

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(self.columns), lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r[k]) for k in self.columns})
        return buf.getvalue()

    def summary_json(self) -> str:
        doc = {
            "experiment": self.config.experiment,
            "config": self.config.to_dict(),
            "complete": self.complete,
            "rows": len(self.rows),
            "summary": self.summary,
            "runtime_seconds": self.runtime,
            "versions": versions(),
        }
        return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"

    def write(self, out: str | Path) -> tuple[Path, Path]:
        base = Path(out)
        base.parent.mkdir(parents=True, exist_ok=True)
        csv_path = base.with_suffix(".csv")
        json_path = base.with_suffix(".json")
        csv_path.write_text(self.csv_text(), encoding="utf-8")
        json_path.write_text(self.summary_json(), encoding="utf-8")
        return csv_path, json_path

    @classmethod
    def load(cls, json_path: str | Path) -> "ResultRecord":
        """Read a record back from its JSON summary and sibling CSV."""
        json_path = Path(json_path)
        doc = json.loads(json_path.read_text(encoding="utf-8"))
        config = ExperimentConfig.from_dict(doc["config"])
        rows: list[dict] = []
        csv_path = json_path.with_suffix(".csv")
        columns: tuple[str, ...] = ()
        if csv_path.exists():
            with csv_path.open(encoding="utf-8", newline="") as fh:
                reader = csv.DictReader(fh)
                columns = tuple(reader.fieldnames or ())
                rows = [{k: _parse(v) for k, v in r.items()} for r in reader]
        return cls(config, rows, doc["summary"], doc["complete"], doc.get("runtime_seconds", 0.0), columns)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def _clean(x):
    # JSON has no NaN/inf; emit null
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return _clean(x.item())
    return x


def versions() -> dict[str, str]:
    return {"brwtree": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def _call(task):
    fn, *args = task
    return fn(*args)


def run(config: ExperimentConfig, write: bool = True) -> ResultRecord:
    """Validate ``config``, execute its tasks, and (if ``config.out`` is set) write CSV + JSON."""
    exp = REGISTRY.get(config.experiment)
    if exp is None:
        raise ValidationError({"experiment": f"unknown experiment {config.experiment!r}; "
                                             f"choose from {', '.join(sorted(REGISTRY))}"})
    params = resolve(config, exp.schema)
    tasks = exp.tasks(params, config.seed)
    start = time.perf_counter()
    deadline = start + config.max_seconds if config.max_seconds else math.inf
    rows: list[dict] = []
    complete = True
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            futures = [pool.submit(_call, t) for t in tasks]
            for i, fut in enumerate(futures):
                rows.extend(fut.result())
                if time.perf_counter() > deadline and i + 1 < len(futures):
                    complete = False
                    for f in futures[i + 1:]:
                        f.cancel()
                    break
    else:
        for i, t in enumerate(tasks):
            rows.extend(_call(t))
            if time.perf_counter() > deadline and i + 1 < len(tasks):
                complete = False
                break
    summary = exp.summary(params, rows) if rows else {}
    record = ResultRecord(config, rows, summary, complete, time.perf_counter() - start, exp.columns)
    if write and config.out:
        record.write(config.out)
    return record


def summarize(records: list[ResultRecord]) -> dict[str, Any]:
    """Aggregate records of one experiment into trend tables and verdicts."""
    if not records:
        raise DomainError("nothing to summarize")
    names = {r.config.experiment for r in records}
    if len(names) > 1:
        raise DomainError(f"records mix experiments: {sorted(names)}")
    name = names.pop()
    report: dict[str, Any] = {"experiment": name, "records": len(records)}
    if len(records) == 1:
        report["summary"] = records[0].summary
        return report
    if name == "free-energy":
        table = sorted(({"N": r.summary["N"], "beta": r.summary["beta"], "mean": r.summary["mean"],
                         "stderr": r.summary["stderr"], "limit": r.summary["limit"]} for r in records),
                       key=lambda t: (t["beta"], t["N"]))
        report["table"] = table
        report["increasing_in_N"] = all(a["mean"] < b["mean"] for a, b in zip(table, table[1:])
                                        if a["beta"] == b["beta"])
        report["below_limit"] = all(t["mean"] < t["limit"] for t in table)
    elif name in ("ballot", "tilted-barrier"):
        xkey, ykey = ("n", "estimate") if name == "ballot" else ("T", "normalized")
        rows = [row for r in records for row in r.rows]
        pts = sorted((row[xkey], row[ykey]) for row in rows if row[ykey] > 0)
        report["table"] = [{xkey: x, ykey: y} for x, y in pts]
        report["fit"] = loglog_fit(*zip(*pts)) if len(pts) >= 2 else None
    elif name == "gamma-event":
        table = sorted((t for r in records for t in r.summary["by_depth"]), key=lambda t: t["N"])
        report["table"] = table
        report["non_increasing"] = non_increasing(table, 2.0)
    elif name == "leader":
        table = sorted((t for r in records for t in r.summary["by_depth"]), key=lambda t: t["N"])
        meds = [t["median"] for t in table]
        report["table"] = table
        report["median_span"] = max(meds) - min(meds)
    else:
        report["summaries"] = [r.summary for r in records]
    return report


def format_report(report: dict[str, Any]) -> str:
    """Plain-text rendering of a :func:`summarize` report."""
    lines = [f"experiment: {report['experiment']}  records: {report['records']}"]
    table = report.get("table")
    if table:
        cols = list(table[0])
        lines.append("  ".join(f"{c:>12}" for c in cols))
        for t in table:
            lines.append("  ".join(f"{_short(t[c]):>12}" for c in cols))
    for k, v in report.items():
        if k not in ("experiment", "records", "table"):
            lines.append(f"{k}: {json.dumps(_clean(v), sort_keys=True)}")
    return "\n".join(lines)


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
