"""Runtime configuration: defaults, flat config file, and flag overrides.

A config file is plain ``key = value`` lines ('#' starts a comment).
Unknown keys are rejected. Effective settings are resolved as
defaults, then file values, then explicit flag overrides, and the
result can be printed back as the same key = value text.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from datetime import datetime
from typing import Any, Mapping

from .errors import ConfigError
from .features import FEATURE_NAMES, FeatureConfig
from .ingest import UTC
from .likelihood import MODES, Thresholds
from .pipeline import TrainConfig
from .popularity import BUY_DEFINITIONS, CategoryBounds
from .synth import SynthConfig


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return tuple(float(p) for p in parts)


@dataclass(slots=True)
class Config:
    """Every tunable setting, flat. Field names double as config-file keys."""

    # paths
    clicks: str | None = None
    buys: str | None = None
    model: str | None = None
    output: str | None = None
    out_dir: str | None = None
    reject_log: str | None = None
    solution: str | None = None
    # features
    features: str = ",".join(FEATURE_NAMES)
    click_cap: int = 10
    duration_cap: int = 30
    # model
    mode: str = "joint"
    alpha: float = 1.0
    buy_definition: str = "events"
    pop_low_max: float = 0.05
    pop_med_max: float = 0.15
    # thresholds
    t1: float = 1.0
    t2: float = 1.0
    # evaluation
    k: int = 5
    seed: int = 0
    test_fraction: float = 0.25
    t1_grid: str = "0.5,1.0,2.0"
    t2_grid: str = "0.5,1.0,2.0"
    # streaming
    idle_timeout: float = 1800.0
    # synthetic data
    synth_sessions: int = 1000
    synth_items: int = 50
    synth_buy_fraction: float = 0.05
    synth_min_clicks: int = 1
    synth_max_clicks: int = 10
    synth_repeat_prob: float = 0.3
    synth_start: str = "2014-04-01"
    synth_days: int = 120
    synth_force_buy: bool = True
    synth_item_popularity: str = ""
    # execution
    workers: int = 0  # 0 = one per processor

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_sources(
        cls, config_path: str | None = None, overrides: Mapping[str, Any] | None = None
    ) -> "Config":
        """Resolve defaults, then the config file, then explicit overrides."""
        config = cls()
        if config_path is not None:
            config.apply(parse_config_file(config_path))
        if overrides:
            config.apply(overrides)
        return config

    def apply(self, values: Mapping[str, Any]) -> None:
        valid = set(self.field_names())
        for key, value in values.items():
            if key not in valid:
                raise ConfigError(f"unknown setting: {key!r}")
            if value is None:
                continue
            current = getattr(self, key)
            if isinstance(value, str) and not isinstance(current, (str, type(None))):
                value = _coerce(key, value, type(current))
            setattr(self, key, value)

    def to_text(self) -> str:
        lines = []
        for name in self.field_names():
            value = getattr(self, name)
            if value is None:
                continue
            lines.append(f"{name} = {value}")
        return "\n".join(lines) + "\n"

    # --- builders for module-level settings objects -------------------

    def feature_config(self) -> FeatureConfig:
        names = tuple(p.strip() for p in self.features.split(",") if p.strip())
        return FeatureConfig(
            enabled=names,
            click_count_cap=self.click_cap,
            duration_cap_minutes=self.duration_cap,
        )

    def thresholds(self) -> Thresholds:
        return Thresholds(self.t1, self.t2)

    def train_config(self) -> TrainConfig:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.buy_definition not in BUY_DEFINITIONS:
            raise ConfigError(
                f"buy_definition must be one of {BUY_DEFINITIONS}, "
                f"got {self.buy_definition!r}"
            )
        return TrainConfig(
            feature_config=self.feature_config(),
            mode=self.mode,
            alpha=self.alpha,
            thresholds=self.thresholds(),
            buy_definition=self.buy_definition,
            category_bounds=CategoryBounds(self.pop_low_max, self.pop_med_max),
        )

    def synth_config(self) -> SynthConfig:
        try:
            start = datetime.strptime(self.synth_start, "%Y-%m-%d").replace(tzinfo=UTC)
        except ValueError as exc:
            raise ConfigError(f"synth_start must be YYYY-MM-DD: {exc}") from exc
        popularity = None
        if self.synth_item_popularity.strip():
            popularity = _parse_float_list(self.synth_item_popularity)
        return SynthConfig(
            seed=self.seed,
            n_sessions=self.synth_sessions,
            n_items=self.synth_items,
            item_popularity=popularity,
            buy_session_fraction=self.synth_buy_fraction,
            min_session_clicks=self.synth_min_clicks,
            max_session_clicks=self.synth_max_clicks,
            repeat_click_prob=self.synth_repeat_prob,
            start=start,
            days=self.synth_days,
            force_buy_session=self.synth_force_buy,
        )

    def t1_values(self) -> tuple[float, ...]:
        return _parse_float_list(self.t1_grid)

    def t2_values(self) -> tuple[float, ...]:
        return _parse_float_list(self.t2_grid)

    def effective_workers(self) -> int:
        if self.workers < 0:
            raise ConfigError(f"workers must be >= 0, got {self.workers}")
        return self.workers or (os.cpu_count() or 1)


def parse_config_file(path: str) -> dict[str, str]:
    """Read ``key = value`` lines; unknown keys are caught by apply()."""
    values: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as stream:
            for line_no, raw in enumerate(stream, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ConfigError(
                        f"{path}:{line_no}: expected 'key = value', got {raw.rstrip()!r}"
                    )
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


def _coerce(key: str, text: str, target: type) -> Any:
    try:
        if target is bool:
            return _parse_bool(text)
        return target(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc
