"""Versioned JSON reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

SCHEMA_VERSION = "1.0.0"

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "experiment", "config", "statistics", "criteria", "passed"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"type": "string"},
        "config": {"type": "object"},
        "params": {"type": ["object", "array", "null"]},
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "statistics": {"type": "object"},
        "criteria": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "passed"],
                "properties": {
                    "name": {"type": "string"},
                    "value": {},
                    "tolerance": {},
                    "passed": {"type": "boolean"},
                    "detail": {"type": "string"},
                },
            },
        },
        "passed": {"type": "boolean"},
    },
}


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    tolerance: object = None
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        parts = [f"[{tag}] {self.name}"]
        if self.value is not None:
            parts.append(f"value={_fmt(self.value)}")
        if self.tolerance is not None:
            parts.append(f"tol={_fmt(self.tolerance)}")
        if self.detail:
            parts.append(self.detail)
        return "  ".join(parts)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


@dataclass
class Report:
    experiment: str
    config: dict
    statistics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    params: object = None
    seeds: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, value=None, tolerance=None, detail="") -> Check:
        c = Check(name, bool(passed), value, tolerance, detail)
        self.checks.append(c)
        return c

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "config": self.config,
            "params": self.params,
            "seeds": [int(s) for s in self.seeds],
            "statistics": self.statistics,
            "criteria": [
                {"name": c.name, "value": c.value, "tolerance": c.tolerance, "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
            "passed": self.passed,
        }
        return to_jsonable(d)

    def to_json(self) -> str:
        d = self.to_dict()
        jsonschema.validate(d, REPORT_SCHEMA)
        return json.dumps(d, indent=2, ensure_ascii=False, allow_nan=False)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path


def to_jsonable(x):
    """Plain JSON types; non-finite floats become the strings 'inf', '-inf', 'nan'."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def validate(d: dict) -> None:
    jsonschema.validate(d, REPORT_SCHEMA)
