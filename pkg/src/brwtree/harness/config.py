"""Experiment configuration: a flat JSON object with typed values."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from ..errors import DomainError


class ValidationError(DomainError):
    """Invalid experiment configuration; ``keys`` names the offending entries."""

    def __init__(self, problems: dict[str, str]):
        self.keys = sorted(problems)
        super().__init__("invalid config: " + "; ".join(f"{k}: {problems[k]}" for k in self.keys))


@dataclass(frozen=True)
class Param:
    kind: type | tuple
    default: Any
    check: Callable[[Any], bool] | None = None
    why: str = ""

    def coerce(self, value):
        kinds = self.kind if isinstance(self.kind, tuple) else (self.kind,)
        if float in kinds and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if list in kinds and not isinstance(value, list):
            value = [value]
        if not isinstance(value, kinds) or isinstance(value, bool) and bool not in kinds:
            raise TypeError(f"expected {' or '.join(k.__name__ for k in kinds)}, got {type(value).__name__}")
        return value


RESERVED = ("experiment", "seed", "out", "workers", "max_seconds")


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    out: str | None = None
    workers: int = 1
    max_seconds: float | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"experiment": self.experiment, "seed": self.seed}
        if self.out is not None:
            d["out"] = self.out
        if self.workers != 1:
            d["workers"] = self.workers
        if self.max_seconds is not None:
            d["max_seconds"] = self.max_seconds
        d.update(self.params)
        return d

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        if "experiment" not in d:
            raise ValidationError({"experiment": "missing"})
        exp = d.pop("experiment")
        seed = d.pop("seed", 0)
        out = d.pop("out", None)
        workers = d.pop("workers", 1)
        max_seconds = d.pop("max_seconds", None)
        return cls(exp, d, seed, out, workers, max_seconds)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValidationError({"<file>": f"not valid JSON ({e})"}) from None
        if not isinstance(d, dict):
            raise ValidationError({"<file>": "top level must be an object"})
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(d)


def resolve(config: ExperimentConfig, schema: dict[str, Param]) -> dict[str, Any]:
    """Fill defaults, coerce types, and collect every problem before raising."""
    problems: dict[str, str] = {}
    if not isinstance(config.seed, int) or not 0 <= config.seed < 2**64:
        problems["seed"] = "must be a 64-bit unsigned integer"
    if not isinstance(config.workers, int) or config.workers < 1:
        problems["workers"] = "must be a positive integer"
    if config.max_seconds is not None and not (isinstance(config.max_seconds, (int, float))
                                               and config.max_seconds > 0):
        problems["max_seconds"] = "must be positive"
    for k in config.params:
        if k not in schema:
            problems[k] = "unknown parameter"
    out = {}
    for k, spec in schema.items():
        v = config.params.get(k, spec.default)
        if v is None:
            problems[k] = "required"
            continue
        try:
            v = spec.coerce(v)
        except TypeError as e:
            problems[k] = str(e)
            continue
        if spec.check is not None and not spec.check(v):
            problems[k] = spec.why or "invalid value"
            continue
        out[k] = v
    if problems:
        raise ValidationError(problems)
    return out
