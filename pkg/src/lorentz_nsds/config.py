"""Run configuration: one dataclass, loadable from JSON or TOML and overridable from the command line."""
from __future__ import annotations

import json
import sys
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geometry import STEPS_PER_UNIT, TOL_NULL
from .nsds import DEFAULT_WINDOW


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class RunConfig:
    example: str = "solenoid"
    params: dict = field(default_factory=dict)
    window: tuple[int, int] = DEFAULT_WINDOW
    seed: int = 0
    N: int = 8
    samples: int = 5
    trials: int = 10
    tol_null: float = TOL_NULL
    steps_per_unit: int = STEPS_PER_UNIT
    tol_inv: float = 1e-9
    tol_limit: float = 1e-3
    tol_cont: float = 1e-3
    delta: float = 0.1
    epsilon: float = 0.5
    budget: int = 200
    length: int = 21
    scale: float = 2.0
    depth: int = 3
    section: bool = False
    metric: str = "flat4"
    metric_matrix: Optional[list] = None
    start: Optional[list] = None
    direction: Optional[list] = None
    t_from: float = 0.0
    t_to: float = 1.0
    vector: Optional[list] = None
    out: Optional[str] = None
    format: str = "json"

    def __post_init__(self):
        self.window = tuple(int(x) for x in self.window)
        self.validate()

    def validate(self) -> None:
        a, b = self.window
        if a >= b:
            raise ConfigError(f"window ({a}, {b}) is empty")
        for name in ("tol_null", "tol_inv", "tol_limit", "tol_cont", "delta", "epsilon", "scale"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("steps_per_unit", "N", "samples", "trials", "budget", "length"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.depth < 0:
            raise ConfigError("depth must be nonnegative")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"format must be json or csv, got {self.format!r}")
        if self.metric_matrix is not None:
            G = np.asarray(self.metric_matrix, dtype=float)
            if G.ndim != 2 or G.shape[0] != G.shape[1] or not np.allclose(G, G.T, atol=1e-12):
                raise ConfigError("metric_matrix must be a symmetric square table")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d

    def rng(self, stream: str) -> np.random.Generator:
        """Independent generator for a named task, derived from the single run seed."""
        return np.random.default_rng([int(self.seed), zlib.crc32(stream.encode())])

    def updated(self, **changes: Any) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return from_mapping(d)


def from_mapping(data: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return RunConfig(**data)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    """Read a ``.json`` or ``.toml`` file; keys mirror ``RunConfig`` fields."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a table/object at top level")
    return from_mapping(data)
