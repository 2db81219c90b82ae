"""Run configuration: parsing, validation, and the resolved echo written next to outputs."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .jumps import DEFAULT_RATE_CAP
from .roots import FAMILIES, ORBIT_LABELS, RootSystem, build_standard, from_roots, parse_system_name
from .sde import PROCESS_KINDS
from .verification import REGISTRY


class ConfigError(ValueError):
    """Malformed, incomplete or contradictory run configuration."""


@dataclass
class RunConfig:
    system: str | None = None
    family: str | None = None
    rank: int | None = None
    k: float | list | dict = 1.0
    roots: list | None = None
    process: str = "ho"
    radial_only: bool = False
    start: list | None = None
    dt: float = 1e-3
    T: float = 1.0
    paths: int = 100
    seed: int = 42
    wall_floor: float | None = None
    rate_cap: float = DEFAULT_RATE_CAP
    stride: int = 1
    workers: int = 1
    out: str = "out"
    verify: list = field(default_factory=lambda: list(REGISTRY))
    budgets: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.roots is not None and (self.system is not None or self.family is not None):
            raise ConfigError("give either 'roots' or 'system'/'family', not both")
        if self.system is not None and self.family is not None:
            raise ConfigError("give either 'system' (e.g. A2) or 'family' + 'rank', not both")
        if self.roots is None:
            if self.system is not None:
                name = str(self.system).strip().upper()
                if name and not name[-1].isdigit():
                    if self.rank is None:
                        raise ConfigError(f"missing key 'rank' for system {self.system!r}")
                    name = f"{name}{int(self.rank)}"
                    self.system = name
                try:
                    fam, rank = parse_system_name(name)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
                if self.rank is not None and int(self.rank) != rank:
                    raise ConfigError(f"conflicting options: system {self.system!r} but rank {self.rank}")
                if fam not in ORBIT_LABELS:
                    raise ConfigError(f"invalid family {fam!r}")
            elif self.family is not None:
                if self.family not in FAMILIES or self.family == "custom":
                    raise ConfigError(f"invalid family {self.family!r}")
                if self.rank is None:
                    raise ConfigError("missing key 'rank'")
            else:
                raise ConfigError("missing key 'system' (or 'family' + 'rank', or 'roots')")
        if self.process not in PROCESS_KINDS:
            raise ConfigError(f"invalid process {self.process!r}; expected one of {PROCESS_KINDS}")
        for name in ("dt", "T", "paths", "rate_cap", "stride", "workers"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.wall_floor is not None and not self.wall_floor > 0:
            raise ConfigError("wall_floor must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        bad = [i for i in self.verify if i not in REGISTRY]
        if bad:
            raise ConfigError(f"unknown verification ids {bad}; known: {list(REGISTRY)}")
        bad = [i for i in self.budgets if i not in REGISTRY]
        if bad:
            raise ConfigError(f"budgets given for unknown ids {bad}")

    def build_model(self) -> RootSystem:
        if self.roots is not None:
            return from_roots(self.roots, self.k)
        if self.system is not None:
            fam, rank = parse_system_name(self.system)
        else:
            fam, rank = self.family, int(self.rank)
        return build_standard(fam, rank, self.k)

    def to_dict(self) -> dict:
        return asdict(self)


KEYS = {f.name for f in fields(RunConfig)}
ALIASES = {"paths": "paths", "path_count": "paths", "horizon": "T", "master_seed": "seed"}


def load_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return data


def _normalize(d: dict, origin: str) -> dict:
    out = {}
    for key, val in d.items():
        key = ALIASES.get(key, key)
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r} in {origin}")
        out[key] = val
    return out


def parse_config(file=None, **flags) -> RunConfig:
    """Merge a YAML/JSON file with explicit flags (flags win; ``None`` flags are ignored)."""
    merged = _normalize(load_file(file), str(file)) if file is not None else {}
    merged.update(_normalize({k: v for k, v in flags.items() if v is not None}, "flags"))
    if isinstance(merged.get("verify"), str):
        merged["verify"] = [s.strip() for s in merged["verify"].split(",") if s.strip()]
    if isinstance(merged.get("start"), (int, float)):
        merged["start"] = [merged["start"]]
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"cannot parse point {text!r}; expected comma-separated numbers") from None
