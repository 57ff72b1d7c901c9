"""Run configuration: a flat key=value config file overridden by CLI flags.

Unknown keys are rejected so typos fail fast instead of silently running
with defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .workflow import SchedulerConfig


@dataclass
class RunConfig:
    # Scheduling
    batch_size: int = 8
    extract_retries: int = 3
    impute_retries: int = 3
    refine_proposals: int = 3
    fit_threshold: float = 3e-3
    m: int = 20
    shortlist_k: int = 5
    include_vessel_id: bool = False
    # Oracle
    oracle_backend: str = "stub"  # stub | http
    oracle_url: str = ""
    oracle_model: str = ""
    # Spatial context
    geofence_path: str = ""
    context_priority: str = ""  # comma-separated category list
    overpass_enabled: bool = False
    overpass_url: str = "https://overpass-api.de/api/interpreter"
    # Misc
    seed: int = 0

    def scheduler(self) -> SchedulerConfig:
        return SchedulerConfig(
            batch_size=self.batch_size,
            extract_retries=self.extract_retries,
            impute_retries=self.impute_retries,
            refine_proposals=self.refine_proposals,
            fit_threshold=self.fit_threshold,
            m=self.m,
            shortlist_k=self.shortlist_k,
            include_vessel_id=self.include_vessel_id,
        )

    def priority_list(self) -> list[str] | None:
        items = [part.strip() for part in self.context_priority.split(",") if part.strip()]
        return items or None


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {name}: cannot parse boolean from {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {name}: {exc}") from exc
    return raw


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read key=value lines (# comments allowed), then apply overrides."""
    values: dict = {}
    if path:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
