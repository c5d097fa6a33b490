"""Run configuration: strict parsing of YAML/JSON parameter trees.

Every section is a dataclass; unknown keys raise :class:`ConfigError`
naming the offending path (``fit.powerz``).  Configuration files are plain
YAML (a JSON document is valid YAML, and ``.json`` files go through the
stdlib parser).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from .potential import Bump, ConfigurationError, Potential
from .spectral import CoefficientField, DomainSpec


class ConfigError(ConfigurationError):
    """Invalid configuration; carries the offending key path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


@dataclass
class DomainConfig:
    n: int = 1
    shape: str = "circle"
    lengths: List[float] = field(default_factory=lambda: [2 * math.pi])
    points: int = 256
    margin: float = 0.0

    def build(self) -> DomainSpec:
        return DomainSpec(self.n, self.shape, tuple(float(v) for v in self.lengths),
                          int(self.points), float(self.margin))


@dataclass
class CoefficientConfig:
    kind: str = "constant"
    value: float = 1.0
    left: float = 1.0
    right: float = 1.0
    position: float = 0.0
    mu: float = 1.0

    def build(self) -> CoefficientField:
        return CoefficientField(self.kind, self.value, self.left, self.right, self.position, self.mu)


@dataclass
class BumpConfig:
    center: List[float] = field(default_factory=lambda: [math.pi])
    radius: float = 1.0
    amplitude: float = 1.0
    poly: List[Any] = field(default_factory=list)

    def build(self) -> Bump:
        poly = tuple((tuple(int(e) for e in exps), float(c)) for exps, c in self.poly)
        return Bump(tuple(float(c) for c in self.center), float(self.radius), float(self.amplitude), poly)


@dataclass
class PotentialConfig:
    bumps: List[BumpConfig] = field(default_factory=list)

    def build(self) -> Potential:
        return Potential(tuple(b.build() for b in self.bumps))


@dataclass
class TimeGridConfig:
    start: float = 1e-3
    stop: float = 1e-1
    count: int = 40
    spacing: str = "log"
    values: List[float] = field(default_factory=list)

    def build(self, scale: float = 1.0) -> np.ndarray:
        if self.values:
            t = np.asarray(self.values, dtype=float)
        elif self.spacing == "log":
            t = np.logspace(math.log10(self.start), math.log10(self.stop), int(self.count))
        elif self.spacing == "linear":
            t = np.linspace(self.start, self.stop, int(self.count))
        else:
            raise ConfigError("t_grid.spacing", f"expected 'log' or 'linear', got {self.spacing!r}")
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ConfigError("t_grid", "times must be positive and strictly increasing")
        return t * scale


@dataclass
class FitConfig:
    powers: List[Any] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    window: List[float] = field(default_factory=list)
    condition_threshold: float = 1e12


@dataclass
class DuhamelConfig:
    j_max: int = 0
    cutoff: Optional[float] = None
    tolerance: float = 1e-10


@dataclass
class BoundaryConfig:
    margins: List[float] = field(default_factory=list)
    amplitude: float = 1.0
    # times in units of margin^2
    t_scaled: TimeGridConfig = field(
        default_factory=lambda: TimeGridConfig(start=1 / 15, stop=1 / 1.5, count=25)
    )
    noise_factor: float = 1000.0


@dataclass
class InvariantsConfig:
    orders: List[int] = field(default_factory=lambda: [2, 4, 6, 8])
    n: int = 1
    budget: int = 16


@dataclass
class VerifyConfig:
    fit_relative: List[float] = field(default_factory=lambda: [0.01, 0.01, 0.05])
    duhamel_slack: float = 1e-6
    boundary_ratio_tolerance: float = 0.5


@dataclass
class RunConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    coefficient: CoefficientConfig = field(default_factory=CoefficientConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    scheme: Optional[str] = None
    diffusion_scale: float = 1.0
    t_grid: TimeGridConfig = field(default_factory=TimeGridConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    duhamel: DuhamelConfig = field(default_factory=DuhamelConfig)
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    invariants: InvariantsConfig = field(default_factory=InvariantsConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)


_SCALARS = (int, float, str, bool)


def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, path)
    if origin is typing.Union:
        inner = [a for a in args if a is not type(None)]
        if value is None:
            return None
        return _convert(inner[0], value, path)
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        (inner,) = args or (Any,)
        return [_convert(inner, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is Any:
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def from_dict(cls, data, path: str = ""):
    """Build dataclass ``cls`` from ``data``, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else str(key)
        if key not in names:
            raise ConfigError(sub, "unknown key")
        kwargs[key] = _convert(hints[key], value, sub)
    return cls(**kwargs)


def load_config(path) -> Tuple[RunConfig, dict]:
    """Parse a YAML or JSON file; return the config and its raw tree."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError("", f"cannot parse {path}: {exc}") from exc
    return parse_config(raw), raw or {}


def parse_config(raw) -> RunConfig:
    cfg = from_dict(RunConfig, raw)
    if cfg.scheme not in (None, "fd", "spectral"):
        raise ConfigError("scheme", f"expected 'fd' or 'spectral', got {cfg.scheme!r}")
    if cfg.diffusion_scale <= 0:
        raise ConfigError("diffusion_scale", "must be positive")
    if cfg.duhamel.j_max not in (0, 1, 2, 3):
        raise ConfigError("duhamel.j_max", "must be between 0 and 3")
    if cfg.fit.window and len(cfg.fit.window) != 2:
        raise ConfigError("fit.window", "expected [t_min, t_max]")
    if len(cfg.verify.fit_relative) != 3 or any(v <= 0 for v in cfg.verify.fit_relative):
        raise ConfigError("verify.fit_relative", "expected three positive tolerances")
    for i, b in enumerate(cfg.potential.bumps):
        if len(b.center) != cfg.domain.n:
            raise ConfigError(f"potential.bumps[{i}].center", "dimension does not match domain.n")
    return cfg


def config_digest(raw) -> str:
    """SHA-256 of the canonical JSON form of a raw config tree."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def to_raw(cfg: RunConfig) -> Dict[str, Any]:
    return dataclasses.asdict(cfg)
