"""Descriptive aggregations over click/buy data.

These back the ``stats`` CLI subcommand: buy volume by calendar unit,
buy probability by click count and by session duration, and buy volume
by popularity band. Each function returns plain header+rows suitable
for CSV output.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .features import FeatureConfig, extract_instances
from .ingest import BuyEvent, Session
from .popularity import PopularityTable, categorize

Rows = tuple[list[str], list[list]]


def buys_by_day_of_month(buys: Iterable[BuyEvent]) -> Rows:
    counts: dict[int, int] = {}
    for buy in buys:
        day = buy.timestamp.day
        counts[day] = counts.get(day, 0) + 1
    return ["day_of_month", "buys"], [[d, counts[d]] for d in sorted(counts)]


def buys_by_day_of_week(buys: Iterable[BuyEvent]) -> Rows:
    counts: dict[int, int] = {}
    for buy in buys:
        dow = (buy.timestamp.weekday() + 1) % 7  # Sunday = 0
        counts[dow] = counts.get(dow, 0) + 1
    return ["day_of_week", "buys"], [[d, counts[d]] for d in sorted(counts)]


def buy_rate_by_click_count(
    sessions: Iterable[Session], config: FeatureConfig = FeatureConfig()
) -> Rows:
    """Fraction of (session, item) instances bought, per click-count bin."""
    totals: dict[int, int] = {}
    bought: dict[int, int] = {}
    for session in sessions:
        for inst in extract_instances(session, config):
            b = inst.features.item_click_count
            totals[b] = totals.get(b, 0) + 1
            if inst.is_buy:
                bought[b] = bought.get(b, 0) + 1
    header = ["click_count_bin", "instances", "bought", "buy_rate"]
    rows = [
        [b, totals[b], bought.get(b, 0), bought.get(b, 0) / totals[b]]
        for b in sorted(totals)
    ]
    return header, rows


def buy_rate_by_duration(
    sessions: Iterable[Session], config: FeatureConfig = FeatureConfig()
) -> Rows:
    """Fraction of sessions with a buy, per duration bin (whole minutes)."""
    totals: dict[int, int] = {}
    buying: dict[int, int] = {}
    for session in sessions:
        first = session.clicks[0].timestamp
        minutes = (session.clicks[-1].timestamp - first).total_seconds() / 60.0
        b = min(int(minutes), config.duration_cap_minutes)
        totals[b] = totals.get(b, 0) + 1
        if session.is_buy:
            buying[b] = buying.get(b, 0) + 1
    header = ["duration_bin", "sessions", "buy_sessions", "buy_rate"]
    rows = [
        [b, totals[b], buying.get(b, 0), buying.get(b, 0) / totals[b]]
        for b in sorted(totals)
    ]
    return header, rows


def buys_by_popularity_category(
    table: PopularityTable, buys: Iterable[BuyEvent]
) -> Rows:
    """Buy-event volume per popularity band of the bought item.

    Items with no popularity entry (never clicked in the table's
    training data) fall into an ``unknown`` band.
    """
    counts = {"low": 0, "medium": 0, "high": 0, "unknown": 0}
    for buy in buys:
        entry = table.get(buy.item_id)
        if entry is None:
            counts["unknown"] += 1
        else:
            counts[categorize(entry.popularity, table.bounds)] += 1
    return ["popularity_category", "buys"], [[name, n] for name, n in counts.items()]


def popularity_category_counts(table: PopularityTable) -> Rows:
    """Number of items in each popularity band."""
    counts = {"low": 0, "medium": 0, "high": 0}
    for _, entry in table.entries():
        counts[categorize(entry.popularity, table.bounds)] += 1
    return ["popularity_category", "items"], [[name, n] for name, n in counts.items()]


def popularity_histogram(table: PopularityTable, bin_width: float = 0.1) -> Rows:
    """Item counts per popularity interval [k*w, (k+1)*w)."""
    counts: dict[int, int] = {}
    for _, entry in table.entries():
        index = int(entry.popularity / bin_width)
        counts[index] = counts.get(index, 0) + 1
    header = ["popularity_low", "popularity_high", "items"]
    rows = [
        [round(i * bin_width, 10), round((i + 1) * bin_width, 10), counts[i]]
        for i in sorted(counts)
    ]
    return header, rows


def write_rows(dest, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write one aggregation as CSV to a path or stream."""
    import csv
    import os

    own = isinstance(dest, (str, os.PathLike))
    stream = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if own:
            stream.close()
