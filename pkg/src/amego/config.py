"""Engine configuration and the flat ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, TypeVar


class ConfigError(ValueError):
    """Invalid configuration value, unknown key or malformed config file."""


@dataclass(frozen=True)
class EngineConfig:
    # hoi tracklets
    w_s: int = 30
    s_o: int = 20
    e_o: int = 20
    iou_match: float = 0.5
    sim_assign_obj: float = 0.6
    # location segments
    s_l: int = 5
    e_l: int = 5
    flow_threshold: float = 2000.0
    sim_assign_loc: float = 0.5
    # retrieval
    query_sim_min: float = 0.6
    rng_seed: int = 0
    # ablation switches, all on for the full method
    use_tracker: bool = True
    hand_gated_termination: bool = True
    use_flow_filter: bool = True
    use_hand_filter: bool = True

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name in ("w_s", "s_o", "e_o", "s_l", "e_l"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.s_o > self.w_s:
            raise ConfigError(f"s_o ({self.s_o}) must not exceed w_s ({self.w_s})")
        if not 0.0 < self.iou_match <= 1.0:
            raise ConfigError(f"iou_match must be in (0, 1], got {self.iou_match}")
        for name in ("sim_assign_obj", "sim_assign_loc", "query_sim_min"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [-1, 1], got {v}")
        if self.flow_threshold <= 0:
            raise ConfigError(f"flow_threshold must be > 0, got {self.flow_threshold}")

    def replace(self, **changes: Any) -> "EngineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EngineConfig":
        return from_mapping(cls, d)


T = TypeVar("T")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(kind: Any, raw: Any, key: str) -> Any:
    if isinstance(raw, str):
        text = raw.strip()
        try:
            if kind in (bool, "bool"):
                low = text.lower()
                if low in _TRUE:
                    return True
                if low in _FALSE:
                    return False
                raise ValueError(text)
            if kind in (int, "int"):
                return int(text)
            if kind in (float, "float"):
                return float(text)
            return text
        except ValueError:
            raise ConfigError(f"cannot parse {key}={raw!r} as {kind}") from None
    if kind in (bool, "bool") and not isinstance(raw, bool):
        raise ConfigError(f"{key} must be a boolean, got {raw!r}")
    if kind in (int, "int") and (isinstance(raw, bool) or not isinstance(raw, int)):
        raise ConfigError(f"{key} must be an integer, got {raw!r}")
    if kind in (float, "float"):
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"{key} must be a number, got {raw!r}")
        return float(raw)
    return raw


def from_mapping(cls: type[T], values: Mapping[str, Any], base: T | None = None) -> T:
    """Build a config dataclass from string or typed values; unknown keys are errors."""
    known = {f.name: f.type for f in fields(cls)}  # type: ignore[arg-type]
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s) for {cls.__name__}: {', '.join(unknown)}")
    typed = {k: _coerce(known[k], v, k) for k, v in values.items()}
    try:
        if base is not None:
            return dataclasses.replace(base, **typed)  # type: ignore[type-var]
        return cls(**typed)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def load_kv_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_kv_text(text, str(path))


def parse_overrides(pairs: list[str] | None) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        k, v = pair.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def dump_kv(cfg: Any) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"
