"""Run configuration: one JSON document per run, command-line flags override keys."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .models import GammaPreset
from .profiling import DEFAULT_EDGES, DEFAULT_MAX_SKEW_S, DEFAULT_WINDOW_S
from .sysid import F_IN, F_OUT, MIN_R2_GAIN


class ConfigError(ValueError):
    pass


_PATH_FIELDS = ("logs", "models", "log", "estimates", "truth", "series", "reference")


@dataclass
class RunConfig:
    out_dir: str = "out"
    seed: int = 0
    # simulate
    scenario: str | list | None = None
    # sysid / estimate inputs
    logs: list = field(default_factory=list)
    log: str | None = None
    models: list = field(default_factory=list)
    gamma_preset: str | None = None
    q_weights: list | None = None
    r_weights: list | None = None
    F_in: float = F_IN
    F_out: float = F_OUT
    min_r2_gain: float = MIN_R2_GAIN
    smooth_window_s: float = 0.5
    # profile / compare inputs
    estimates: str | None = None
    truth: str | None = None
    series: str | None = None
    reference: str | None = None
    reference_name: str = "reference"
    bin_edges: list = field(default_factory=lambda: list(DEFAULT_EDGES))
    pre_average_s: float = 1.0
    average_s: float = DEFAULT_WINDOW_S
    max_skew_s: float = DEFAULT_MAX_SKEW_S
    workers: int = 1

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**doc)
        cfg.check_ranges()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)

    def override(self, **kwargs) -> "RunConfig":
        updates = {k: v for k, v in kwargs.items() if v is not None}
        cfg = dataclasses.replace(self, **updates)
        cfg.check_ranges()
        return cfg

    def check_ranges(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.gamma_preset is not None:
            try:
                GammaPreset(self.gamma_preset)
            except ValueError:
                raise ConfigError(f"unknown gamma_preset {self.gamma_preset!r}") from None
        if not self.F_in > self.F_out > 0:
            raise ConfigError("need F_in > F_out > 0")
        if not 0 <= self.min_r2_gain < 1:
            raise ConfigError("min_r2_gain must be within [0, 1)")
        edges = self.bin_edges
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ConfigError("bin_edges must be strictly increasing")
        for name in ("pre_average_s", "average_s", "smooth_window_s"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be >= 0")
        if not (math.isfinite(self.max_skew_s) and self.max_skew_s > 0):
            raise ConfigError("max_skew_s must be positive")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        for name, n in (("q_weights", 15), ("r_weights", 12)):
            v = getattr(self, name)
            if v is not None and (len(v) != n or any(not (w > 0) for w in v)):
                raise ConfigError(f"{name} must hold {n} positive values")

    def check_paths(self, *names):
        """Raise :class:`ConfigError` unless every named path field exists."""
        for name in names or _PATH_FIELDS:
            value = getattr(self, name)
            paths = value if isinstance(value, list) else [value] if value else []
            for p in paths:
                if not Path(p).exists():
                    raise ConfigError(f"{name}: file not found: {p}")

    def require(self, *names):
        for name in names:
            if not getattr(self, name):
                raise ConfigError(f"config key {name!r} is required for this command")
