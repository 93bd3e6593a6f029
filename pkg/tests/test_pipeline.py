"""Train/predict orchestration, streaming mode, and bundle persistence."""

from __future__ import annotations

import io
import random
from collections import Counter
from datetime import timedelta

import pytest

from buypredict import (
    ArtifactError,
    Session,
    StreamDiagnostics,
    Thresholds,
    TrainConfig,
    extract_instances,
    load_bundle,
    predict_batch,
    predict_session,
    read_solution,
    save_bundle,
    step1_filter,
    stream_predict,
    train,
    write_solution,
)
from buypredict.pipeline import bundle_from_bytes, bundle_to_bytes
from buypredict import separable_fixture

from util import T0, buy, click, random_sessions, session


def _bundle(sessions=None, **kwargs):
    sessions = sessions if sessions is not None else random_sessions(random.Random(1), 120)
    return train(sessions, TrainConfig(**kwargs)), sessions


class TestTrain:
    def test_two_session_fixture(self):
        sessions = [session(sid=1, items=(1, 2), bought=(1,)), session(sid=2, items=(3,))]
        bundle = train(sessions, TrainConfig())
        assert bundle.likelihood.total_buy >= 1
        assert bundle.popularity.get(1).buys == 1

    def test_shuffled_input_gives_identical_artifact(self):
        rng = random.Random(2)
        sessions = random_sessions(rng, 80)
        a = train(sessions, TrainConfig())
        shuffled = sessions[:]
        rng.shuffle(shuffled)
        b = train(shuffled, TrainConfig())
        assert bundle_to_bytes(a) == bundle_to_bytes(b)

    def test_threshold_change_only_touches_thresholds(self):
        sessions = random_sessions(random.Random(3), 60)
        a = train(sessions, TrainConfig(thresholds=Thresholds(1.0, 1.0)))
        b = train(sessions, TrainConfig(thresholds=Thresholds(2.0, 1.0)))
        assert a.likelihood == b.likelihood
        assert a.popularity.counts == b.popularity.counts
        assert a.thresholds != b.thresholds

    def test_needs_a_buy_session(self):
        from buypredict import FitError

        with pytest.raises(FitError):
            train([session(sid=1, items=(1,))], TrainConfig())


class TestPredictSession:
    def test_all_ratios_below_t1_gives_empty(self):
        fixture = separable_fixture(5)
        bundle = train(fixture, TrainConfig(alpha=0.0, thresholds=Thresholds(1.0, 0.0)))
        nonbuy = next(s for s in fixture if not s.is_buy)
        pred = predict_session(bundle, nonbuy)
        assert pred.predicted_items == frozenset()
        assert not pred.session_is_buy

    def test_known_item_passing_both_steps_is_predicted(self):
        fixture = separable_fixture(5)
        bundle = train(fixture, TrainConfig(alpha=0.0, thresholds=Thresholds(1.0, 0.0)))
        buyer = next(s for s in fixture if s.is_buy)
        pred = predict_session(bundle, buyer)
        assert pred.predicted_items == buyer.bought_items
        assert pred.session_is_buy

    def test_cold_start_item_passes_step2(self):
        # train where item 42 never appears, then present it with a winning ratio
        train_sessions = [
            session(sid=1, items=(1,), bought=(1,), start=T0),
            session(sid=2, items=(2,), start=T0.replace(hour=15)),
        ]
        bundle = train(
            train_sessions, TrainConfig(alpha=0.0, thresholds=Thresholds(1.0, 100.0))
        )
        fresh = session(sid=3, items=(42,), start=T0)  # same features as the buy session
        pred = predict_session(bundle, fresh)
        assert pred.predicted_items == {42}

    def test_labels_are_ignored(self):
        fixture = separable_fixture(6)
        bundle = train(fixture, TrainConfig(alpha=0.0, thresholds=Thresholds(1.0, 0.0)))
        buyer = next(s for s in fixture if s.is_buy)
        stripped = Session.build(buyer.session_id, buyer.clicks)
        assert predict_session(bundle, stripped) == predict_session(bundle, buyer)

    def test_two_step_containment(self):
        bundle, sessions = _bundle()
        for s in sessions[:40]:
            instances = extract_instances(s, bundle.feature_config)
            step1 = step1_filter(bundle.likelihood, instances, bundle.thresholds.t1)
            pred = predict_session(bundle, s)
            step1_items = {i.item_id for i in step1}
            assert pred.predicted_items <= step1_items
            assert step1_items <= s.clicked_items


class TestPredictBatch:
    def test_empty(self):
        bundle, _ = _bundle()
        assert predict_batch(bundle, []) == []

    def test_elementwise(self):
        bundle, sessions = _bundle()
        batch = predict_batch(bundle, sessions)
        assert batch == [predict_session(bundle, s) for s in sessions]

    def test_duplicate_sessions_predict_identically(self):
        bundle, sessions = _bundle()
        twice = [sessions[0], sessions[0]]
        a, b = predict_batch(bundle, twice)
        assert a == b

    def test_parallel_workers_match_sequential(self):
        bundle, sessions = _bundle()
        assert predict_batch(bundle, sessions, workers=2) == predict_batch(
            bundle, sessions
        )


class TestThresholdMonotonicity:
    def test_raising_thresholds_never_adds_predictions(self):
        rng = random.Random(30)
        sessions = random_sessions(rng, 150)
        base = train(sessions, TrainConfig(thresholds=Thresholds(0.5, 0.5)))
        for _ in range(20):
            t1 = rng.uniform(0, 3)
            t2 = rng.uniform(0, 3)
            lower = base.with_thresholds(Thresholds(t1, t2))
            higher = base.with_thresholds(
                Thresholds(t1 + rng.uniform(0, 2), t2 + rng.uniform(0, 2))
            )
            for s in sessions[:60]:
                a = predict_session(lower, s).predicted_items
                b = predict_session(higher, s).predicted_items
                assert b <= a

    def test_t2_never_affects_unknown_items(self):
        rng = random.Random(31)
        sessions = random_sessions(rng, 100, n_items=25)
        bundle = train(sessions, TrainConfig(thresholds=Thresholds(0.0, 0.0)))
        table = bundle.popularity
        probe = random_sessions(random.Random(99), 60, n_items=60)  # many cold items
        for s in probe:
            unknown = {i for i in s.clicked_items if table.get(i) is None}
            preds = [
                predict_session(bundle.with_thresholds(Thresholds(0.0, t2)), s)
                for t2 in (0.0, 0.5, 5.0, 500.0)
            ]
            kept_unknown = [p.predicted_items & unknown for p in preds]
            assert all(k == kept_unknown[0] for k in kept_unknown)


class TestStreaming:
    def test_single_session_equals_batch(self):
        bundle, sessions = _bundle()
        s = sessions[0]
        out = list(stream_predict(bundle, s.clicks, idle_timeout_seconds=60.0))
        assert out == [predict_session(bundle, s)]

    def test_two_interleaved_sessions_match_batch(self):
        bundle, _ = _bundle()
        a = session(sid=101, items=(1, 2, 1), start=T0, gap_s=5)
        b = session(sid=102, items=(3, 4), start=T0 + timedelta(seconds=2), gap_s=5)
        stream = sorted(a.clicks + b.clicks, key=lambda c: c.timestamp)
        out = list(stream_predict(bundle, stream, idle_timeout_seconds=3600.0))
        expected = predict_batch(bundle, [a, b])
        assert sorted(out, key=lambda p: p.session_id) == expected

    def test_idle_timeout_finalizes_before_stream_end(self):
        bundle, _ = _bundle()
        a = session(sid=1, items=(1,), start=T0)
        late = session(sid=2, items=(2,), start=T0 + timedelta(hours=3))
        stream = list(a.clicks) + list(late.clicks)
        got = []
        emitted_during = None
        gen = stream_predict(bundle, stream, idle_timeout_seconds=60.0)
        for pred in gen:
            if emitted_during is None:
                emitted_during = pred
            got.append(pred)
        assert emitted_during.session_id == 1  # finalized by the clock jump
        assert {p.session_id for p in got} == {1, 2}

    def test_late_event_dropped_and_counted(self):
        bundle, _ = _bundle()
        a = session(sid=1, items=(1,), start=T0)
        jump = session(sid=2, items=(2,), start=T0 + timedelta(hours=3))
        straggler = click(sid=1, item=9, at=T0 + timedelta(hours=3, minutes=1))
        stream = list(a.clicks) + list(jump.clicks) + [straggler]
        diagnostics = StreamDiagnostics()
        out = list(
            stream_predict(bundle, stream, idle_timeout_seconds=60.0, diagnostics=diagnostics)
        )
        assert diagnostics.late_events == 1
        assert out[0] == predict_session(bundle, a)  # unchanged by the straggler

    def test_multiset_equivalence_on_generated_interleavings(self):
        bundle, _ = _bundle()
        rng = random.Random(77)
        sessions = random_sessions(rng, 200, spread_days=2)
        stream = sorted(
            (c for s in sessions for c in s.clicks), key=lambda c: c.timestamp
        )
        streamed = list(stream_predict(bundle, stream, idle_timeout_seconds=86_400.0))
        batch = predict_batch(bundle, sessions)
        assert Counter(streamed) == Counter(batch)

    def test_bad_timeout_rejected(self):
        from buypredict import ConfigError

        bundle, _ = _bundle()
        with pytest.raises(ConfigError):
            list(stream_predict(bundle, [], idle_timeout_seconds=0.0))


class TestSolutionFormat:
    def test_write_omits_empty_and_sorts_items(self):
        from buypredict import SessionPrediction

        preds = [
            SessionPrediction(3, frozenset({7, 2})),
            SessionPrediction(5, frozenset()),
            SessionPrediction(9, frozenset({1})),
        ]
        out = io.StringIO()
        assert write_solution(preds, out) == 2
        assert out.getvalue() == "3;2,7\n9;1\n"

    def test_read_round_trip(self):
        from buypredict import SessionPrediction

        preds = [SessionPrediction(3, frozenset({7, 2})), SessionPrediction(9, frozenset({1}))]
        out = io.StringIO()
        write_solution(preds, out)
        assert read_solution(io.StringIO(out.getvalue())) == preds

    def test_read_rejects_garbage(self):
        from buypredict import DataError

        with pytest.raises(DataError):
            read_solution(io.StringIO("not-a-session;1,2\n"))


class TestBundlePersistence:
    def test_round_trip_is_bit_exact(self, tmp_path):
        bundle, _ = _bundle(alpha=0.25, thresholds=Thresholds(1.5, 0.75))
        path = tmp_path / "model.json"
        save_bundle(bundle, path)
        loaded = load_bundle(path)
        assert loaded.likelihood == bundle.likelihood
        assert loaded.popularity.counts == bundle.popularity.counts
        assert loaded.thresholds == bundle.thresholds
        assert bundle_to_bytes(loaded) == bundle_to_bytes(bundle)

    def test_independent_mode_round_trip(self, tmp_path):
        bundle, _ = _bundle(mode="independent", alpha=1.0)
        path = tmp_path / "model.json"
        save_bundle(bundle, path)
        assert load_bundle(path).likelihood == bundle.likelihood

    def test_feature_key_survives_save_load(self, tmp_path):
        bundle, sessions = _bundle()
        path = tmp_path / "model.json"
        save_bundle(bundle, path)
        loaded = load_bundle(path)
        for s in sessions[:20]:
            for inst in extract_instances(s, loaded.feature_config):
                got = loaded.likelihood.likelihood_ratio(inst.features)
                want = bundle.likelihood.likelihood_ratio(inst.features)
                assert got == want

    def test_tampered_feature_config_detected(self, tmp_path):
        bundle, _ = _bundle()
        raw = bundle_to_bytes(bundle).decode()
        tampered = raw.replace('"click_count_cap":10', '"click_count_cap":5')
        assert tampered != raw
        with pytest.raises(ArtifactError, match="checksum"):
            bundle_from_bytes(tampered.encode())

    def test_wrong_version_rejected(self):
        bundle, _ = _bundle()
        raw = bundle_to_bytes(bundle).decode().replace(
            '"format_version":1', '"format_version":99'
        )
        with pytest.raises(ArtifactError, match="version"):
            bundle_from_bytes(raw.encode())

    def test_not_json_rejected(self):
        with pytest.raises(ArtifactError):
            bundle_from_bytes(b"\x00\x01binary")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactError):
            load_bundle(tmp_path / "missing.json")
