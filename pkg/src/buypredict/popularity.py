"""Per-item popularity table and the step-2 filter.

An item's popularity is its training buy count divided by its training
click count, kept as an exact rational. Step-2 keeps a step-1 survivor
when popularity times its in-session click count exceeds a threshold;
items with no popularity entry (never clicked in training) pass through
so cold-start items are not silently suppressed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .errors import ConfigError
from .features import Instance
from .ingest import BuyEvent, ClickEvent

BUY_DEFINITIONS = ("events", "sessions", "quantity")

CATEGORY_LOW = "low"
CATEGORY_MEDIUM = "medium"
CATEGORY_HIGH = "high"


@dataclass(frozen=True, slots=True)
class CategoryBounds:
    """Inclusive upper edges of the low and medium popularity bands.

    Used for reporting only; category labels never influence step-2
    decisions.
    """

    low_max: float = 0.05
    med_max: float = 0.15

    def __post_init__(self) -> None:
        if not (0 <= self.low_max < self.med_max):
            raise ConfigError(
                f"category bounds must satisfy 0 <= low_max < med_max, "
                f"got ({self.low_max!r}, {self.med_max!r})"
            )


@dataclass(frozen=True, slots=True)
class PopularityEntry:
    buys: int
    clicks: int

    @property
    def popularity(self) -> Fraction:
        """Exact buys-per-click ratio; can exceed 1 when buys repeat."""
        return Fraction(self.buys, self.clicks)


@dataclass(slots=True)
class PopularityTable:
    """Per-item (buys, clicks) counts.

    Items with zero clicks are retained internally so partial tables
    merge losslessly, but they have no popularity: lookups return None
    and they are excluded from iteration.
    """

    counts: dict[int, tuple[int, int]] = field(default_factory=dict)
    bounds: CategoryBounds = CategoryBounds()
    buy_definition: str = "events"

    def __post_init__(self) -> None:
        if self.buy_definition not in BUY_DEFINITIONS:
            raise ConfigError(
                f"buy_definition must be one of {BUY_DEFINITIONS}, "
                f"got {self.buy_definition!r}"
            )

    def get(self, item_id: int) -> PopularityEntry | None:
        pair = self.counts.get(item_id)
        if pair is None or pair[1] == 0:
            return None
        return PopularityEntry(*pair)

    def entries(self) -> Iterator[tuple[int, PopularityEntry]]:
        """Iterate (item_id, entry) for items with at least one click."""
        for item_id, (buys, clicks) in self.counts.items():
            if clicks:
                yield item_id, PopularityEntry(buys, clicks)

    def __len__(self) -> int:
        return sum(1 for _, (_, clicks) in self.counts.items() if clicks)

    @property
    def unclicked_buy_items(self) -> int:
        """Items bought in training but never clicked (no popularity)."""
        return sum(1 for buys, clicks in self.counts.values() if clicks == 0)


def build_popularity(
    clicks: Iterable[ClickEvent],
    buys: Iterable[BuyEvent] = (),
    buy_definition: str = "events",
    bounds: CategoryBounds = CategoryBounds(),
) -> PopularityTable:
    """Count training clicks and buys per item.

    ``buy_definition`` selects what the buy count means: raw buy events
    (default), distinct buying sessions, or total quantity.
    """
    if buy_definition not in BUY_DEFINITIONS:
        raise ConfigError(
            f"buy_definition must be one of {BUY_DEFINITIONS}, got {buy_definition!r}"
        )
    click_counts: dict[int, int] = {}
    for event in clicks:
        click_counts[event.item_id] = click_counts.get(event.item_id, 0) + 1

    buy_counts: dict[int, int] = {}
    if buy_definition == "sessions":
        seen: set[tuple[int, int]] = set()
        for buy in buys:
            pair = (buy.item_id, buy.session_id)
            if pair not in seen:
                seen.add(pair)
                buy_counts[buy.item_id] = buy_counts.get(buy.item_id, 0) + 1
    elif buy_definition == "quantity":
        for buy in buys:
            buy_counts[buy.item_id] = buy_counts.get(buy.item_id, 0) + buy.quantity
    else:
        for buy in buys:
            buy_counts[buy.item_id] = buy_counts.get(buy.item_id, 0) + 1

    counts = {
        item: (buy_counts.pop(item, 0), n_clicks)
        for item, n_clicks in click_counts.items()
    }
    for item, n_buys in buy_counts.items():  # bought but never clicked
        counts[item] = (n_buys, 0)
    return PopularityTable(counts=counts, bounds=bounds, buy_definition=buy_definition)


def merge_popularity(tables: Sequence[PopularityTable]) -> PopularityTable:
    """Sum per-item counts of partial tables built with the same settings."""
    if not tables:
        raise ConfigError("merge needs at least one popularity table")
    head = tables[0]
    for other in tables[1:]:
        if (
            other.buy_definition != head.buy_definition
            or other.bounds != head.bounds
        ):
            raise ConfigError("cannot merge popularity tables with differing settings")
    merged: dict[int, tuple[int, int]] = {}
    for table in tables:
        for item, (buys, clicks) in table.counts.items():
            old = merged.get(item, (0, 0))
            merged[item] = (old[0] + buys, old[1] + clicks)
    return PopularityTable(
        counts=merged, bounds=head.bounds, buy_definition=head.buy_definition
    )


def categorize(p: "Fraction | float", bounds: CategoryBounds = CategoryBounds()) -> str:
    """Label a popularity value low/medium/high against the band edges."""
    if p <= bounds.low_max:
        return CATEGORY_LOW
    if p <= bounds.med_max:
        return CATEGORY_MEDIUM
    return CATEGORY_HIGH


def step2_filter(
    selected: Sequence[Instance], table: PopularityTable, t2: float
) -> list[Instance]:
    """Final buy selection among step-1 survivors.

    An instance is kept when its item's popularity times the exact (un-
    capped) in-session click count exceeds t2, or when the item has no
    popularity entry at all. The comparison is exact: p*n > t2 is
    evaluated as b*n*den(t2) > num(t2)*c in integers.
    """
    t2_exact = Fraction(t2)
    num, den = t2_exact.numerator, t2_exact.denominator
    counts = table.counts
    kept: list[Instance] = []
    for inst in selected:
        pair = counts.get(inst.item_id)
        if pair is None or pair[1] == 0:
            kept.append(inst)  # no popularity: pass through
        elif pair[0] * inst.click_count * den > num * pair[1]:
            kept.append(inst)
    return kept
