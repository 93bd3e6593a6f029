"""Seeded synthetic click/buy logs with a planted ground-truth model.

The generator works in two stages, mirroring the decision structure the
predictor learns. First each session draws a buy propensity: base odds
from ``buy_session_fraction`` multiplied by per-feature odds factors
for the session's calendar/duration bins, squashed back to a
probability. Second, inside a buy-eligible session every click on item
``i`` independently produces a buy event with the item's planted rate
(odds-adjusted by any click-count factor). With ``force_buy_session``
a buy-eligible session that drew no buys gets one forced buy so the
session-level fraction stays exactly as planted; disable it when a test
needs per-click buys to be exactly Bernoulli.

The manifest records, per (session, item), the planted probability that
the item is bought: propensity * (1 - (1 - rate)^clicks), i.e. the
pre-forcing value.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError
from .ingest import (
    UTC,
    BuyEvent,
    ClickEvent,
    Session,
    assemble_sessions,
    write_buys_csv,
    write_clicks_csv,
)

SESSION_EFFECT_FEATURES = (
    "hour_of_day",
    "day_of_month",
    "day_of_week",
    "month_of_year",
    "duration_bin",
)
ITEM_EFFECT_FEATURE = "item_click_count"

_EFFECT_CLICK_CAP = 10  # effects are keyed on the default bin layout
_EFFECT_DURATION_CAP = 30


@dataclass(frozen=True, slots=True)
class SynthConfig:
    seed: int = 0
    n_sessions: int = 1000
    n_items: int = 50
    item_popularity: tuple[float, ...] | None = None
    buy_session_fraction: float = 0.05
    feature_effects: Mapping[str, Mapping[int, float]] = field(default_factory=dict)
    min_session_clicks: int = 1
    max_session_clicks: int = 10
    repeat_click_prob: float = 0.3
    start: datetime = datetime(2014, 4, 1, tzinfo=UTC)
    days: int = 120
    max_click_gap_seconds: float = 120.0
    force_buy_session: bool = True

    def __post_init__(self) -> None:
        if self.n_sessions < 1:
            raise ConfigError("n_sessions must be >= 1")
        if self.n_items < 1:
            raise ConfigError("n_items must be >= 1")
        if not (0 < self.buy_session_fraction <= 1):
            raise ConfigError("buy_session_fraction must be in (0, 1]")
        if self.item_popularity is not None:
            if len(self.item_popularity) != self.n_items:
                raise ConfigError(
                    f"item_popularity has {len(self.item_popularity)} entries "
                    f"for {self.n_items} items"
                )
            if any(not (0 <= p <= 1) for p in self.item_popularity):
                raise ConfigError("item_popularity values must be in [0, 1]")
        if not (1 <= self.min_session_clicks <= self.max_session_clicks):
            raise ConfigError("need 1 <= min_session_clicks <= max_session_clicks")
        if not (0 <= self.repeat_click_prob < 1):
            raise ConfigError("repeat_click_prob must be in [0, 1)")
        if self.days < 1 or self.max_click_gap_seconds <= 0:
            raise ConfigError("days and max_click_gap_seconds must be positive")
        allowed = set(SESSION_EFFECT_FEATURES) | {ITEM_EFFECT_FEATURE}
        unknown = set(self.feature_effects) - allowed
        if unknown:
            raise ConfigError(f"feature_effects for unknown features: {sorted(unknown)}")
        for name, table in self.feature_effects.items():
            if any(f < 0 for f in table.values()):
                raise ConfigError(f"feature_effects[{name!r}] has negative factors")

    def item_rates(self) -> tuple[float, ...]:
        """Planted per-click buy rate per item (1-based item id = index + 1)."""
        if self.item_popularity is not None:
            return self.item_popularity
        if self.n_items == 1:
            return (0.2,)
        span = self.n_items - 1
        return tuple(0.05 + 0.30 * i / span for i in range(self.n_items))


@dataclass(frozen=True, slots=True)
class ManifestRow:
    session_id: int
    item_id: int
    click_count: int
    session_propensity: float
    item_rate: float
    instance_prob: float
    bought: bool


@dataclass(slots=True)
class SynthResult:
    clicks: list[ClickEvent]
    buys: list[BuyEvent]
    manifest: list[ManifestRow]

    def sessions(self) -> dict[int, Session]:
        return assemble_sessions(self.clicks, self.buys)


@dataclass(frozen=True, slots=True)
class SynthFiles:
    clicks: Path
    buys: Path
    manifest: Path


def generate(config: SynthConfig) -> SynthResult:
    """Generate events and the planted-truth manifest, deterministic per seed."""
    rng = random.Random(config.seed)
    rates = config.item_rates()
    session_effects = {
        name: config.feature_effects.get(name, {}) for name in SESSION_EFFECT_FEATURES
    }
    count_effects = config.feature_effects.get(ITEM_EFFECT_FEATURE, {})

    clicks: list[ClickEvent] = []
    buys: list[BuyEvent] = []
    manifest: list[ManifestRow] = []

    for sid in range(1, config.n_sessions + 1):
        offset_ms = rng.randrange(config.days * 86_400_000)
        t = config.start + timedelta(milliseconds=offset_ms)
        length = rng.randint(config.min_session_clicks, config.max_session_clicks)

        session_clicks: list[ClickEvent] = []
        clicked_items: list[int] = []
        for _ in range(length):
            if clicked_items and rng.random() < config.repeat_click_prob:
                item = rng.choice(clicked_items)
            else:
                item = rng.randint(1, config.n_items)
            clicked_items.append(item)
            session_clicks.append(ClickEvent(sid, t, item, "0"))
            gap_ms = round(rng.uniform(1.0, config.max_click_gap_seconds) * 1000)
            t += timedelta(milliseconds=gap_ms)

        propensity = _session_propensity(config, session_effects, session_clicks)
        eligible = rng.random() < propensity

        item_counts: dict[int, int] = {}
        for item in clicked_items:
            item_counts[item] = item_counts.get(item, 0) + 1
        item_rate = {
            item: _with_odds_factor(
                rates[item - 1], count_effects.get(min(n, _EFFECT_CLICK_CAP), 1.0)
            )
            for item, n in item_counts.items()
        }

        bought_counts: dict[int, int] = {}
        if eligible:
            for click in session_clicks:
                if rng.random() < item_rate[click.item_id]:
                    bought_counts[click.item_id] = bought_counts.get(click.item_id, 0) + 1
                    buys.append(_buy_for(rng, click))
            if config.force_buy_session and not bought_counts:
                weights = [item_rate[c.item_id] for c in session_clicks]
                if sum(weights) > 0:
                    click = rng.choices(session_clicks, weights=weights)[0]
                else:
                    click = rng.choice(session_clicks)
                bought_counts[click.item_id] = 1
                buys.append(_buy_for(rng, click))

        clicks.extend(session_clicks)
        for item, n in item_counts.items():
            rate = item_rate[item]
            manifest.append(
                ManifestRow(
                    session_id=sid,
                    item_id=item,
                    click_count=n,
                    session_propensity=propensity,
                    item_rate=rate,
                    instance_prob=propensity * (1.0 - (1.0 - rate) ** n),
                    bought=item in bought_counts,
                )
            )
    return SynthResult(clicks=clicks, buys=buys, manifest=manifest)


def write_dataset(config: SynthConfig, out_dir: "str | Path") -> SynthFiles:
    """Generate and write clicks.csv, buys.csv, manifest.csv under out_dir."""
    result = generate(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = SynthFiles(
        clicks=out / "clicks.csv", buys=out / "buys.csv", manifest=out / "manifest.csv"
    )
    write_clicks_csv(result.clicks, files.clicks)
    write_buys_csv(result.buys, files.buys)
    with open(files.manifest, "w", encoding="utf-8", newline="") as stream:
        stream.write(
            "session_id,item_id,click_count,session_propensity,"
            "item_rate,instance_prob,bought\n"
        )
        for row in result.manifest:
            stream.write(
                f"{row.session_id},{row.item_id},{row.click_count},"
                f"{row.session_propensity!r},{row.item_rate!r},"
                f"{row.instance_prob!r},{int(row.bought)}\n"
            )
    return files


def separable_fixture(seed: int = 0) -> list[Session]:
    """A small dataset whose buy and non-buy instances share no feature key.

    Buy sessions click (and buy) every item during morning hours;
    non-buy sessions click during the afternoon. With alpha=0 every buy
    instance scores an infinite ratio and every non-buy instance scores
    zero, so the pipeline separates the classes perfectly for any
    finite t1 > 0 once t2 is 0.
    """
    rng = random.Random(seed)
    base_day = datetime(2014, 4, 7, tzinfo=UTC)  # Monday
    sessions: list[Session] = []
    sid = 0

    def make_session(buy: bool) -> Session:
        nonlocal sid
        sid += 1
        hour = rng.choice((9, 10) if buy else (15, 16))
        t = base_day + timedelta(
            hours=hour, minutes=rng.randint(0, 50), seconds=rng.randint(0, 59)
        )
        items = rng.sample(range(1, 9), k=rng.randint(1, 2))
        session_clicks: list[ClickEvent] = []
        for item in items:
            for _ in range(rng.randint(1, 2)):
                session_clicks.append(ClickEvent(sid, t, item, "0"))
                t += timedelta(seconds=rng.randint(1, 20))
        buy_events = (
            tuple(
                BuyEvent(sid, t + timedelta(seconds=30), item, 999, 1) for item in items
            )
            if buy
            else ()
        )
        return Session.build(sid, session_clicks, buy_events)

    for _ in range(60):
        sessions.append(make_session(buy=True))
    for _ in range(120):
        sessions.append(make_session(buy=False))
    return sessions


def _session_propensity(
    config: SynthConfig,
    session_effects: Mapping[str, Mapping[int, float]],
    session_clicks: list[ClickEvent],
) -> float:
    f = config.buy_session_fraction
    if f >= 1.0:
        return 1.0
    first = session_clicks[0].timestamp
    minutes = (session_clicks[-1].timestamp - first).total_seconds() / 60.0
    bins = {
        "hour_of_day": first.hour,
        "day_of_month": first.day,
        "day_of_week": (first.weekday() + 1) % 7,
        "month_of_year": first.month,
        "duration_bin": min(int(minutes), _EFFECT_DURATION_CAP),
    }
    odds = f / (1.0 - f)
    for name, value in bins.items():
        odds *= session_effects[name].get(value, 1.0)
    return odds / (1.0 + odds)


def _with_odds_factor(p: float, factor: float) -> float:
    if factor == 1.0 or p <= 0.0 or p >= 1.0:
        return p
    odds = (p / (1.0 - p)) * factor
    return odds / (1.0 + odds)


def _buy_for(rng: random.Random, click: ClickEvent) -> BuyEvent:
    delay_ms = round(rng.uniform(5.0, 600.0) * 1000)
    return BuyEvent(
        session_id=click.session_id,
        timestamp=click.timestamp + timedelta(milliseconds=delay_ms),
        item_id=click.item_id,
        price=rng.randrange(100, 10_000),
        quantity=rng.randint(1, 3),
    )
