"""Click/buy log parsing and session assembly.

Input files are plain CSV, one record per line:

    clicks: session_id,timestamp,item_id,category
    buys:   session_id,timestamp,item_id,price,quantity

Timestamps are ISO-8601 UTC instants (e.g. ``2014-04-07T10:51:09.277Z``)
and are kept at millisecond precision. Malformed lines never abort a
parse; they are counted in a :class:`RejectLog` with their line number.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, TextIO

from .errors import DataError

UTC = timezone.utc


@dataclass(frozen=True, slots=True)
class ClickEvent:
    session_id: int
    timestamp: datetime
    item_id: int
    category: str = ""


@dataclass(frozen=True, slots=True)
class BuyEvent:
    session_id: int
    timestamp: datetime
    item_id: int
    price: int = 0
    quantity: int = 0


@dataclass(frozen=True, slots=True)
class Session:
    """One click session: time-ordered clicks plus its ground-truth buys.

    ``bought_items`` may reference items never clicked in the session;
    ground truth is kept as-is and evaluation reports such items as
    unreachable positives.
    """

    session_id: int
    clicks: tuple[ClickEvent, ...]
    buy_events: tuple[BuyEvent, ...] = ()
    bought_items: frozenset[int] = frozenset()

    @classmethod
    def build(
        cls,
        session_id: int,
        clicks: Iterable[ClickEvent],
        buy_events: Iterable[BuyEvent] = (),
    ) -> "Session":
        """Construct a session, sorting clicks by time (input order on ties)."""
        ordered = tuple(sorted(clicks, key=lambda c: c.timestamp))
        buys = tuple(buy_events)
        return cls(
            session_id=session_id,
            clicks=ordered,
            buy_events=buys,
            bought_items=frozenset(e.item_id for e in buys),
        )

    @property
    def is_buy(self) -> bool:
        return bool(self.bought_items)

    @property
    def clicked_items(self) -> frozenset[int]:
        return frozenset(c.item_id for c in self.clicks)


@dataclass(slots=True)
class RejectLog:
    """Collects (line_no, reason) pairs for lines a parser refused."""

    records: list[tuple[int, str]] = field(default_factory=list)

    def add(self, line_no: int, reason: str) -> None:
        self.records.append((line_no, reason))

    def __len__(self) -> int:
        return len(self.records)

    def write_csv(self, dest: "str | os.PathLike[str] | TextIO") -> None:
        own, stream = _open_text_out(dest)
        try:
            stream.write("line_no,reason\n")
            for line_no, reason in self.records:
                stream.write(f"{line_no},{_csv_escape(reason)}\n")
        finally:
            if own:
                stream.close()


@dataclass(slots=True)
class IngestDiagnostics:
    """Tallies for records dropped during session assembly."""

    orphan_buys: int = 0
    orphan_buy_sessions: int = 0


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 instant to a UTC datetime at millisecond precision.

    A trailing ``Z``, a numeric offset, or no offset at all (taken as UTC)
    are accepted; fractional seconds are optional and truncated to
    milliseconds.
    """
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1]
    try:
        ts = datetime.fromisoformat(s)
    except ValueError:
        ts = _parse_timestamp_slow(s)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=UTC)
    elif ts.utcoffset():
        ts = ts.astimezone(UTC)
    else:
        ts = ts.replace(tzinfo=UTC)
    us = ts.microsecond
    if us % 1000:
        ts = ts.replace(microsecond=us - us % 1000)
    return ts


def _parse_timestamp_slow(s: str) -> datetime:
    # Normalize fractional-second width; fromisoformat on 3.10 only
    # accepts 3 or 6 digits.
    head, dot, frac = s.partition(".")
    if not dot:
        raise ValueError(f"not an ISO-8601 instant: {s!r}")
    offset = ""
    for sep in ("+", "-"):
        if sep in frac:
            frac, _, offset = frac.partition(sep)
            offset = sep + offset
            break
    if not frac.isdigit():
        raise ValueError(f"not an ISO-8601 instant: {s!r}")
    frac = (frac + "000000")[:6]
    return datetime.fromisoformat(f"{head}.{frac}{offset}")


def format_timestamp(ts: datetime) -> str:
    """Render a UTC instant as ``YYYY-MM-DDTHH:MM:SS.mmmZ``."""
    return (
        f"{ts.year:04d}-{ts.month:02d}-{ts.day:02d}"
        f"T{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d}"
        f".{ts.microsecond // 1000:03d}Z"
    )


def parse_clicks(source, rejects: RejectLog | None = None) -> Iterator[ClickEvent]:
    """Yield ClickEvents from a click CSV in file order.

    Every input line either yields an event or is added to ``rejects``.
    Stream-level read failures propagate as-is.
    """
    own, lines = _open_text_in(source)
    try:
        for line_no, line in enumerate(lines, start=1):
            parts = line.rstrip("\r\n").split(",")
            if len(parts) != 4:
                _reject(rejects, line_no, f"expected 4 fields, got {len(parts)}")
                continue
            try:
                session_id = int(parts[0])
                item_id = int(parts[2])
                timestamp = parse_timestamp(parts[1])
            except ValueError as exc:
                _reject(rejects, line_no, str(exc))
                continue
            if session_id < 1 or item_id < 1:
                _reject(rejects, line_no, "session_id and item_id must be >= 1")
                continue
            yield ClickEvent(session_id, timestamp, item_id, parts[3])
    finally:
        if own:
            lines.close()


def parse_buys(source, rejects: RejectLog | None = None) -> Iterator[BuyEvent]:
    """Yield BuyEvents from a buy CSV in file order; same contract as parse_clicks."""
    own, lines = _open_text_in(source)
    try:
        for line_no, line in enumerate(lines, start=1):
            parts = line.rstrip("\r\n").split(",")
            if len(parts) != 5:
                _reject(rejects, line_no, f"expected 5 fields, got {len(parts)}")
                continue
            try:
                session_id = int(parts[0])
                item_id = int(parts[2])
                price = int(parts[3]) if parts[3] else 0
                quantity = int(parts[4]) if parts[4] else 0
                timestamp = parse_timestamp(parts[1])
            except ValueError as exc:
                _reject(rejects, line_no, str(exc))
                continue
            if session_id < 1 or item_id < 1:
                _reject(rejects, line_no, "session_id and item_id must be >= 1")
                continue
            if price < 0 or quantity < 0:
                _reject(rejects, line_no, "price and quantity must be >= 0")
                continue
            yield BuyEvent(session_id, timestamp, item_id, price, quantity)
    finally:
        if own:
            lines.close()


def assemble_sessions(
    clicks: Iterable[ClickEvent],
    buys: Iterable[BuyEvent] = (),
    diagnostics: IngestDiagnostics | None = None,
) -> dict[int, Session]:
    """Group events into labeled sessions keyed by session id.

    Buys whose session has no clicks are dropped and tallied in
    ``diagnostics``. Click ordering inside a session is by timestamp,
    with input order breaking ties.
    """
    clicks_by_sid: dict[int, list[ClickEvent]] = {}
    for event in clicks:
        group = clicks_by_sid.get(event.session_id)
        if group is None:
            clicks_by_sid[event.session_id] = [event]
        else:
            group.append(event)

    buys_by_sid: dict[int, list[BuyEvent]] = {}
    for buy in buys:
        buys_by_sid.setdefault(buy.session_id, []).append(buy)

    sessions: dict[int, Session] = {}
    for sid, group in clicks_by_sid.items():
        group.sort(key=lambda c: c.timestamp)  # stable: preserves input order
        session_buys = tuple(buys_by_sid.pop(sid, ()))
        sessions[sid] = Session(
            session_id=sid,
            clicks=tuple(group),
            buy_events=session_buys,
            bought_items=frozenset(e.item_id for e in session_buys),
        )

    if diagnostics is not None:
        for leftover in buys_by_sid.values():
            diagnostics.orphan_buy_sessions += 1
            diagnostics.orphan_buys += len(leftover)
    return sessions


def write_clicks_csv(events: Iterable[ClickEvent], dest) -> None:
    own, stream = _open_text_out(dest)
    try:
        for e in events:
            stream.write(
                f"{e.session_id},{format_timestamp(e.timestamp)},{e.item_id},{e.category}\n"
            )
    finally:
        if own:
            stream.close()


def write_buys_csv(events: Iterable[BuyEvent], dest) -> None:
    own, stream = _open_text_out(dest)
    try:
        for e in events:
            stream.write(
                f"{e.session_id},{format_timestamp(e.timestamp)},"
                f"{e.item_id},{e.price},{e.quantity}\n"
            )
    finally:
        if own:
            stream.close()


def session_clicks(sessions: Iterable[Session]) -> Iterator[ClickEvent]:
    for s in sessions:
        yield from s.clicks


def session_buys(sessions: Iterable[Session]) -> Iterator[BuyEvent]:
    for s in sessions:
        yield from s.buy_events


def _reject(rejects: RejectLog | None, line_no: int, reason: str) -> None:
    if rejects is not None:
        rejects.add(line_no, reason)


def _csv_escape(text: str) -> str:
    if any(ch in text for ch in ',"\n\r'):
        return '"' + text.replace('"', '""') + '"'
    return text


def _open_text_in(source):
    """Return (owns_handle, line iterable) for a path, file object, or line iterable."""
    if isinstance(source, (str, os.PathLike)):
        try:
            return True, open(source, "r", encoding="utf-8", newline="")
        except OSError as exc:
            raise DataError(f"cannot read {source}: {exc}") from exc
    if isinstance(source, io.TextIOBase):
        return False, source
    if hasattr(source, "read"):
        return False, io.TextIOWrapper(source, encoding="utf-8", newline="")
    return False, iter(source)


def _open_text_out(dest):
    if isinstance(dest, (str, os.PathLike)):
        Path(dest).parent.mkdir(parents=True, exist_ok=True)
        return True, open(dest, "w", encoding="utf-8", newline="")
    return False, dest
