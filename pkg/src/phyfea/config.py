"""Engine configuration, file loading, and flag/env resolution."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError

LOSS_NAMES = ("opening", "dilation")


@dataclass
class EngineConfig:
    alpha: float = 1e-5
    epsilon: float = 1e-8
    iterations_override: int | None = None
    losses: tuple = LOSS_NAMES
    pair_mode: str = "all"
    connectivity: int = 8
    precision: str = "double"
    bg_tol: float = 1e-6
    infeasibility_threshold: int = 3
    workers: int | None = None
    num_classes: int | None = None
    ignore_value: int = 255

    def validate(self) -> "EngineConfig":
        if not (0 < self.alpha < 1):
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.iterations_override is not None and self.iterations_override < 1:
            raise ConfigError("iterations override must be >= 1")
        bad = [name for name in self.losses if name not in LOSS_NAMES]
        if bad:
            raise ConfigError(f"unknown losses {bad}; valid: {LOSS_NAMES}")
        if self.pair_mode not in ("all", "infeasible_only"):
            raise ConfigError(f"pair_mode must be 'all' or 'infeasible_only', got {self.pair_mode!r}")
        if self.connectivity not in (4, 8):
            raise ConfigError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.precision not in ("single", "double"):
            raise ConfigError(f"precision must be 'single' or 'double', got {self.precision!r}")
        if self.bg_tol < 0:
            raise ConfigError(f"bg_tol must be >= 0, got {self.bg_tol}")
        if self.infeasibility_threshold < 0:
            raise ConfigError("infeasibility_threshold must be >= 0")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def resolve_workers(self) -> int:
        """PHYFEA_THREADS overrides everything; default is the machine."""
        env = os.environ.get("PHYFEA_THREADS")
        if env is not None:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError(f"PHYFEA_THREADS must be an integer, got {env!r}")
            if n < 1:
                raise ConfigError("PHYFEA_THREADS must be >= 1")
            return n
        if self.workers is not None:
            return self.workers
        return os.cpu_count() or 1

    def merged(self, **overrides) -> "EngineConfig":
        """Copy with the given non-None overrides applied."""
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **clean)


def parse_losses(text: str) -> tuple:
    """'opening,dilation' | 'opening' | 'dilation' | 'none' -> tuple."""
    text = text.strip().lower()
    if text == "none":
        return ()
    parts = tuple(p.strip() for p in text.split(",") if p.strip())
    for p in parts:
        if p not in LOSS_NAMES:
            raise ConfigError(f"unknown loss {p!r}; valid: {LOSS_NAMES} or 'none'")
    if not parts:
        raise ConfigError("losses must name at least one pass or be 'none'")
    return parts


def load_config(path: str) -> EngineConfig:
    """Read an EngineConfig from a JSON object file; unknown keys rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    known = {f.name for f in fields(EngineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"config {path} has unknown keys {sorted(unknown)}")
    if "losses" in raw:
        value = raw["losses"]
        raw["losses"] = parse_losses(value) if isinstance(value, str) else tuple(value)
    return EngineConfig(**raw).validate()
