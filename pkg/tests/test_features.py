"""Feature extraction, binning, and key stability."""

from __future__ import annotations

import random
import time
from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from buypredict import (
    ConfigError,
    FeatureConfig,
    Session,
    extract_instances,
    feature_key,
    session_duration_minutes,
)

from util import T0, UTC, click, fv, random_sessions, session


class TestSessionDuration:
    def test_endpoint_difference(self):
        s = session(items=(1, 2), gap_s=330)  # 10:00:00 and 10:05:30
        assert session_duration_minutes(s) == 5.5

    def test_single_click_is_zero(self):
        assert session_duration_minutes(session(items=(1,))) == 0.0

    def test_middle_clicks_ignored(self):
        clicks = [
            click(item=1, offset_s=0),
            click(item=2, offset_s=120),
            click(item=3, offset_s=420),
        ]
        assert session_duration_minutes(Session.build(1, clicks)) == 7.0


class TestExtractInstances:
    def test_one_instance_per_distinct_item_with_counts(self):
        s = Session.build(
            1,
            [click(item=7, offset_s=0), click(item=8, offset_s=5), click(item=7, offset_s=9)],
        )
        instances = extract_instances(s)
        by_item = {inst.item_id: inst for inst in instances}
        assert set(by_item) == {7, 8}
        assert by_item[7].click_count == 2
        assert by_item[7].features.item_click_count == 2
        assert by_item[8].click_count == 1

    def test_calendar_features_from_first_click(self):
        # Sunday 2014-04-06 18:44 UTC
        start = datetime(2014, 4, 6, 18, 44, tzinfo=UTC)
        s = session(items=(5,), start=start)
        inst = extract_instances(s)[0]
        assert inst.features.day_of_week == 0  # Sunday origin
        assert inst.features.hour_of_day == 18
        assert inst.features.day_of_month == 6
        assert inst.features.month_of_year == 4

    def test_click_count_cap(self):
        s = Session.build(1, [click(item=3, offset_s=i) for i in range(12)])
        inst = extract_instances(s)[0]
        assert inst.features.item_click_count == 10  # ">=10" bin
        assert inst.click_count == 12  # exact count kept alongside

    def test_duration_floor_and_cap(self):
        s = session(items=(1, 2), gap_s=95)  # 1.58 min -> bin 1
        assert extract_instances(s)[0].features.duration_bin == 1
        long_s = session(items=(1, 2), gap_s=40 * 60)
        assert extract_instances(long_s)[0].features.duration_bin == 30

    def test_labels_follow_bought_items(self):
        s = session(items=(1, 2), bought=(2,))
        by_item = {inst.item_id: inst for inst in extract_instances(s)}
        assert not by_item[1].is_buy
        assert by_item[2].is_buy

    def test_uncapped_counts_sum_to_session_clicks(self):
        rng = random.Random(5)
        for s in random_sessions(rng, 50):
            instances = extract_instances(s)
            assert sum(i.click_count for i in instances) == len(s.clicks)

    def test_pure_function(self):
        s = session(items=(1, 2, 1), bought=(1,))
        assert extract_instances(s) == extract_instances(s)


class TestFeatureKey:
    def test_equal_vectors_equal_keys(self):
        assert feature_key(fv()) == feature_key(fv())

    def test_differs_in_any_field(self):
        base = fv()
        assert feature_key(base) != feature_key(fv(duration=3))
        assert feature_key(base) != feature_key(fv(hour=11))

    def test_respects_enabled_subset(self):
        config = FeatureConfig(enabled=("hour_of_day", "item_click_count"))
        assert feature_key(fv(hour=10, count=2), config) == (10, 2)
        # disabled fields do not leak into the key
        assert feature_key(fv(hour=10, count=2, duration=9), config) == (10, 2)

    def test_enabled_order_is_canonical(self):
        a = FeatureConfig(enabled=("item_click_count", "hour_of_day"))
        b = FeatureConfig(enabled=("hour_of_day", "item_click_count"))
        assert a == b
        assert feature_key(fv(hour=10, count=2), a) == (10, 2)

    def test_single_feature_key_is_tuple(self):
        config = FeatureConfig(enabled=("hour_of_day",))
        assert feature_key(fv(hour=7), config) == (7,)

    @given(
        hour=st.integers(0, 23),
        day=st.integers(1, 31),
        dow=st.integers(0, 6),
        month=st.integers(1, 12),
        count=st.integers(1, 10),
        duration=st.integers(0, 30),
    )
    @settings(max_examples=200, deadline=None)
    def test_injective_over_binned_domain(self, hour, day, dow, month, count, duration):
        vec = fv(hour=hour, day=day, dow=dow, month=month, count=count, duration=duration)
        assert feature_key(vec) == (hour, day, dow, month, count, duration)


class TestFeatureConfig:
    def test_rejects_unknown_names(self):
        with pytest.raises(ConfigError):
            FeatureConfig(enabled=("hour_of_day", "color"))

    def test_rejects_empty_and_duplicates(self):
        with pytest.raises(ConfigError):
            FeatureConfig(enabled=())
        with pytest.raises(ConfigError):
            FeatureConfig(enabled=("hour_of_day", "hour_of_day"))

    def test_rejects_bad_caps(self):
        with pytest.raises(ConfigError):
            FeatureConfig(click_count_cap=0)


class TestCalendarAgreement:
    def test_matches_gmtime_on_random_instants(self):
        """Calendar decomposition agrees with the C library on 1,000 instants."""
        rng = random.Random(123)
        lo = int(datetime(2000, 1, 1, tzinfo=UTC).timestamp())
        hi = int(datetime(2030, 12, 31, tzinfo=UTC).timestamp())
        for _ in range(1000):
            epoch = rng.randrange(lo, hi)
            s = session(items=(1,), start=datetime.fromtimestamp(epoch, tz=UTC))
            got = extract_instances(s)[0].features
            ref = time.gmtime(epoch)
            assert got.hour_of_day == ref.tm_hour
            assert got.day_of_month == ref.tm_mday
            assert got.month_of_year == ref.tm_mon
            assert got.day_of_week == (ref.tm_wday + 1) % 7  # gmtime: Monday = 0
