"""Training configuration and the flat key=value config format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .ingest import ConfigError


@dataclass
class TrainConfig:
    dim: int = 128
    layers: int = 3
    lr: float = 1e-3
    weight_decay: float = 5e-4
    batch_size: int = 200
    epochs: int = 100
    patience: int = 10
    lam: float = 0.1
    tau: float = 0.1
    split_threshold: float = -0.5
    warmup_epochs: int = 20
    sim_window: int = 10
    geo_threshold_km: float = 2.5
    downtown_radius_km: float = 10.0
    tourist_threshold: float = 0.05
    val_fraction: float = 0.1
    seed: int = 0
    threads: int = 1
    no_split: bool = False
    no_subgraph: bool = False
    frozen: tuple[str, ...] = field(default_factory=tuple)

    def validate(self) -> "TrainConfig":
        positive = ("dim", "layers", "lr", "batch_size", "sim_window", "tau", "geo_threshold_km",
                    "downtown_radius_km", "threads")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("weight_decay", "epochs", "patience", "warmup_epochs", "tourist_threshold"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must lie in [0, 1]")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def coerce(key: str, raw: Any) -> Any:
    """Convert a raw string (or already typed value) to the field's type."""
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    if not isinstance(raw, str):
        return tuple(raw) if kind.startswith("tuple") else raw
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = coerce(key, value)
    return values


def load_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, str(path))


def resolve_config(
    file_values: Mapping[str, Any] | None = None, overrides: Mapping[str, Any] | None = None
) -> TrainConfig:
    """Defaults, then config-file values, then command-line overrides."""
    merged: dict[str, Any] = {}
    for layer in (file_values or {}, overrides or {}):
        for k, v in layer.items():
            if v is not None:
                merged[k] = coerce(k, v)
    return TrainConfig(**merged).validate()
