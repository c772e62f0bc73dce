"""Check results and the JSON report document emitted by the CLI."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import __version__

VOLATILE_KEYS = ("timing",)


@dataclass
class CheckEntry:
    name: str
    passed: bool
    margin: float
    n_samples: int
    details: dict = field(default_factory=dict)

    def as_json(self) -> dict:
        return {
            "name": self.name,
            "pass": bool(self.passed),
            "margin": _clean(self.margin),
            "n_samples": int(self.n_samples),
            "details": _clean(self.details),
        }


@dataclass
class VerificationReport:
    """Per-condition entries plus the parameters (N, c, lambda, tolerances) they were run with."""

    entries: list[CheckEntry]
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def entry(self, name: str) -> CheckEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]


def _clean(x: Any):
    """Make numpy scalars/arrays and non-finite floats JSON-safe."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x != x:
            return "nan"
        if x in (float("inf"), float("-inf")):
            return "inf" if x > 0 else "-inf"
        return x
    return x


@dataclass
class ReportDocument:
    config: dict
    checks: list[CheckEntry]
    version: str = __version__
    timing: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        doc = {
            "config": _clean(self.config),
            "checks": [c.as_json() for c in self.checks],
            "version": self.version,
            "timing": _clean(self.timing),
        }
        if self.extra:
            doc["extra"] = _clean(self.extra)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ReportDocument":
        validate_document(doc)
        checks = [
            CheckEntry(c["name"], c["pass"], c["margin"], c["n_samples"], c.get("details", {}))
            for c in doc["checks"]
        ]
        return cls(doc["config"], checks, doc["version"], doc.get("timing", {}), doc.get("extra", {}))


def canonical(doc: dict) -> str:
    """Serialisation used for determinism comparisons: volatile keys removed."""
    stable = {k: v for k, v in doc.items() if k not in VOLATILE_KEYS}
    return json.dumps(stable, sort_keys=True)


def validate_document(doc: dict) -> None:
    for key in ("config", "checks", "version"):
        if key not in doc:
            raise ValueError(f"report is missing top-level key {key!r}")
    if not isinstance(doc["checks"], list):
        raise ValueError("'checks' must be a list")
    seen = set()
    for c in doc["checks"]:
        for key in ("name", "pass", "margin", "n_samples"):
            if key not in c:
                raise ValueError(f"check entry is missing {key!r}")
        if not isinstance(c["pass"], bool):
            raise ValueError(f"check {c['name']!r}: 'pass' must be a boolean")
        if c["name"] in seen:
            raise ValueError(f"check {c['name']!r} appears twice")
        seen.add(c["name"])
