"""Shared builders for the test suite."""

from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone

from buypredict import BuyEvent, ClickEvent, FeatureVector, Instance, Session

UTC = timezone.utc
T0 = datetime(2014, 4, 7, 10, 0, 0, tzinfo=UTC)


def click(sid=1, item=100, at=T0, offset_s=0.0, category="0") -> ClickEvent:
    return ClickEvent(sid, at + timedelta(seconds=offset_s), item, category)


def buy(sid=1, item=100, at=T0, offset_s=3600.0, price=999, quantity=1) -> BuyEvent:
    return BuyEvent(sid, at + timedelta(seconds=offset_s), item, price, quantity)


def session(sid=1, items=(100,), bought=(), start=T0, gap_s=10.0) -> Session:
    """A session clicking ``items`` in order with fixed gaps."""
    clicks = [
        click(sid, item, at=start, offset_s=i * gap_s) for i, item in enumerate(items)
    ]
    buys = [buy(sid, item, at=start) for item in bought]
    return Session.build(sid, clicks, buys)


def fv(hour=10, day=7, dow=1, month=4, count=1, duration=0) -> FeatureVector:
    return FeatureVector(
        hour_of_day=hour,
        day_of_month=day,
        day_of_week=dow,
        month_of_year=month,
        item_click_count=count,
        duration_bin=duration,
    )


def instance(sid=1, item=100, features=None, count=None, is_buy=False) -> Instance:
    features = features if features is not None else fv()
    return Instance(
        session_id=sid,
        item_id=item,
        features=features,
        click_count=count if count is not None else features.item_click_count,
        is_buy=is_buy,
    )


def random_instances(rng: random.Random, n: int, n_keys: int = 40) -> list[Instance]:
    """Labeled instances over a bounded random key space."""
    out = []
    for i in range(n):
        count = rng.randint(1, 12)
        vec = fv(
            hour=rng.randrange(24),
            day=rng.randint(1, 28),
            dow=rng.randrange(7),
            month=rng.randint(1, 12),
            count=min(count, 10),
            duration=rng.randint(0, 30),
        )
        if n_keys < 10_000:
            # collapse onto a smaller key space so counts repeat
            vec = fv(hour=rng.randrange(4), count=rng.randint(1, max(2, n_keys // 4)))
        out.append(
            instance(
                sid=i + 1,
                item=rng.randint(1, 50),
                features=vec,
                count=count,
                is_buy=rng.random() < 0.4,
            )
        )
    return out


def random_sessions(
    rng: random.Random,
    n: int,
    n_items: int = 30,
    buy_rate: float = 0.3,
    max_clicks: int = 8,
    start: datetime = T0,
    spread_days: int = 60,
) -> list[Session]:
    """Random labeled sessions, independent of the synth generator."""
    sessions = []
    for sid in range(1, n + 1):
        t = start + timedelta(
            seconds=rng.randrange(spread_days * 86400), milliseconds=rng.randrange(1000)
        )
        clicks = []
        n_clicks = rng.randint(1, max_clicks)
        items = []
        for _ in range(n_clicks):
            if items and rng.random() < 0.35:
                item = rng.choice(items)
            else:
                item = rng.randint(1, n_items)
            items.append(item)
            clicks.append(ClickEvent(sid, t, item, "0"))
            t += timedelta(milliseconds=rng.randrange(500, 90_000))
        buys = []
        if rng.random() < buy_rate:
            k = rng.randint(1, len(set(items)))
            for item in rng.sample(sorted(set(items)), k):
                buys.append(
                    BuyEvent(sid, t + timedelta(seconds=60), item, 999, rng.randint(1, 3))
                )
        sessions.append(Session.build(sid, clicks, buys))
    return sessions
