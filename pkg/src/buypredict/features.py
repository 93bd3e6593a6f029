"""Per-(session, item) feature extraction and binning.

Each instance carries six binned features: hour of day, day of month,
day of week (Sunday = 0), month of year, in-session click count on the
item (capped), and session duration in whole minutes (capped). Calendar
and duration features describe the session as a whole and are taken
from its first click; the click count is per item.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from operator import attrgetter
from typing import Callable, Iterable

from .errors import ConfigError
from .ingest import Session

FEATURE_NAMES = (
    "hour_of_day",
    "day_of_month",
    "day_of_week",
    "month_of_year",
    "item_click_count",
    "duration_bin",
)

FeatureKey = tuple[int, ...]


@dataclass(frozen=True, slots=True)
class FeatureVector:
    hour_of_day: int
    day_of_month: int
    day_of_week: int
    month_of_year: int
    item_click_count: int
    duration_bin: int


@dataclass(frozen=True, slots=True)
class FeatureConfig:
    """Bin caps and the subset of features that participate in model keys.

    ``enabled`` is normalized to the canonical FEATURE_NAMES order so
    that keys are stable regardless of how the subset was written.
    """

    enabled: tuple[str, ...] = FEATURE_NAMES
    click_count_cap: int = 10
    duration_cap_minutes: int = 30

    def __post_init__(self) -> None:
        unknown = [name for name in self.enabled if name not in FEATURE_NAMES]
        if unknown:
            raise ConfigError(f"unknown feature names: {unknown}")
        if len(set(self.enabled)) != len(self.enabled):
            raise ConfigError("duplicate feature names in enabled set")
        if not self.enabled:
            raise ConfigError("at least one feature must be enabled")
        if self.click_count_cap < 1 or self.duration_cap_minutes < 0:
            raise ConfigError("bin caps must be positive")
        canonical = tuple(n for n in FEATURE_NAMES if n in self.enabled)
        object.__setattr__(self, "enabled", canonical)

    def key_getter(self) -> Callable[[FeatureVector], FeatureKey]:
        """Return a fast FeatureVector -> key function for this config."""
        if len(self.enabled) == 1:
            single = attrgetter(self.enabled[0])
            return lambda fv: (single(fv),)
        return attrgetter(*self.enabled)


@dataclass(frozen=True, slots=True)
class Instance:
    """One (session, item) pair: the unit the step-1 classifier scores.

    ``click_count`` is the exact in-session click count on the item;
    the capped value lives in ``features.item_click_count``.
    """

    session_id: int
    item_id: int
    features: FeatureVector
    click_count: int
    is_buy: bool = False


def session_duration_minutes(session: Session) -> float:
    """Minutes between the first and last click; 0 for a single click."""
    clicks = session.clicks
    delta = clicks[-1].timestamp - clicks[0].timestamp
    return delta.total_seconds() / 60.0


def extract_instances(
    session: Session, config: FeatureConfig = FeatureConfig()
) -> list[Instance]:
    """Build one Instance per distinct item clicked in the session.

    Instances appear in first-click order of their item, so the output
    is a pure function of the session.
    """
    first = session.clicks[0].timestamp
    hour = first.hour
    day = first.day
    weekday = (first.weekday() + 1) % 7  # Sunday = 0
    month = first.month
    duration_bin = min(int(session_duration_minutes(session)), config.duration_cap_minutes)
    cap = config.click_count_cap
    bought = session.bought_items

    counts = Counter(c.item_id for c in session.clicks)
    return [
        Instance(
            session_id=session.session_id,
            item_id=item_id,
            features=FeatureVector(
                hour_of_day=hour,
                day_of_month=day,
                day_of_week=weekday,
                month_of_year=month,
                item_click_count=min(n, cap),
                duration_bin=duration_bin,
            ),
            click_count=n,
            is_buy=item_id in bought,
        )
        for item_id, n in counts.items()
    ]


def extract_all(
    sessions: Iterable[Session], config: FeatureConfig = FeatureConfig()
) -> list[Instance]:
    """Extract instances from many sessions into one flat list."""
    out: list[Instance] = []
    for session in sessions:
        out.extend(extract_instances(session, config))
    return out


def feature_key(fv: FeatureVector, config: FeatureConfig = FeatureConfig()) -> FeatureKey:
    """Map a binned vector to its model key: the enabled fields, in order.

    Injective over the binned domain and stable across runs and
    processes, so keys can index persisted count tables.
    """
    return config.key_getter()(fv)
