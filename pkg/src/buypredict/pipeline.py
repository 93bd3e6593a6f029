"""Train/predict orchestration in batch and streaming modes.

A trained :class:`ModelBundle` couples the likelihood model, the
popularity table, and the two thresholds. Prediction runs instances
through the step-1 ratio filter and the step-2 popularity filter; a
session is predicted as a buy when any of its items survive both.

Streaming mode consumes a click stream ordered per session and
finalizes a session once the stream clock (the largest timestamp seen)
has advanced more than the idle timeout past that session's last click,
or at end of stream. Finalized predictions equal batch predictions on
the accumulated clicks.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .errors import ArtifactError, ConfigError, DataError
from .features import FeatureConfig, extract_instances
from .ingest import ClickEvent, Session
from .likelihood import (
    MODE_INDEPENDENT,
    MODE_JOINT,
    LikelihoodModel,
    Thresholds,
    fit,
    step1_filter,
)
from .popularity import (
    CategoryBounds,
    PopularityTable,
    build_popularity,
    step2_filter,
)

FORMAT_NAME = "buypredict-bundle"
FORMAT_VERSION = 1

_PARALLEL_MIN_SESSIONS = 64


@dataclass(frozen=True, slots=True)
class TrainConfig:
    """Everything train() needs besides the sessions themselves."""

    feature_config: FeatureConfig = FeatureConfig()
    mode: str = MODE_JOINT
    alpha: float = 1.0
    thresholds: Thresholds = Thresholds(1.0, 1.0)
    buy_definition: str = "events"
    category_bounds: CategoryBounds = CategoryBounds()


@dataclass(frozen=True, slots=True)
class SessionPrediction:
    session_id: int
    predicted_items: frozenset[int]

    @property
    def session_is_buy(self) -> bool:
        return bool(self.predicted_items)


@dataclass(frozen=True, slots=True)
class ModelBundle:
    likelihood: LikelihoodModel
    popularity: PopularityTable
    thresholds: Thresholds
    format_version: int = FORMAT_VERSION

    @property
    def feature_config(self) -> FeatureConfig:
        return self.likelihood.feature_config

    def with_thresholds(self, thresholds: Thresholds) -> "ModelBundle":
        return replace(self, thresholds=thresholds)


@dataclass(slots=True)
class StreamDiagnostics:
    """Counters kept while consuming a click stream."""

    late_events: int = 0
    finalized_sessions: int = 0


def train(sessions: Sequence[Session], config: TrainConfig = TrainConfig()) -> ModelBundle:
    """Fit the likelihood model and popularity table on labeled sessions."""
    fc = config.feature_config
    instances = [
        inst for session in sessions for inst in extract_instances(session, fc)
    ]
    model = fit(instances, mode=config.mode, alpha=config.alpha, feature_config=fc)
    table = build_popularity(
        (c for s in sessions for c in s.clicks),
        (b for s in sessions for b in s.buy_events),
        buy_definition=config.buy_definition,
        bounds=config.category_bounds,
    )
    return ModelBundle(likelihood=model, popularity=table, thresholds=config.thresholds)


def predict_session(bundle: ModelBundle, session: Session) -> SessionPrediction:
    """Run one session through both filters; ground-truth labels are ignored."""
    instances = extract_instances(session, bundle.feature_config)
    selected = step1_filter(bundle.likelihood, instances, bundle.thresholds.t1)
    kept = step2_filter(selected, bundle.popularity, bundle.thresholds.t2)
    return SessionPrediction(
        session_id=session.session_id,
        predicted_items=frozenset(inst.item_id for inst in kept),
    )


def predict_batch(
    bundle: ModelBundle, sessions: Sequence[Session], workers: int = 1
) -> list[SessionPrediction]:
    """Predict each session independently; output order matches input."""
    if workers > 1 and len(sessions) >= _PARALLEL_MIN_SESSIONS:
        return _predict_batch_parallel(bundle, sessions, workers)
    return [predict_session(bundle, session) for session in sessions]


def _predict_batch_parallel(
    bundle: ModelBundle, sessions: Sequence[Session], workers: int
) -> list[SessionPrediction]:
    from concurrent.futures import ProcessPoolExecutor

    chunk = max(16, len(sessions) // (workers * 8) or 1)
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_init_worker, initargs=(bundle,)
    ) as pool:
        return list(pool.map(_predict_in_worker, sessions, chunksize=chunk))


_WORKER_BUNDLE: ModelBundle | None = None


def _init_worker(bundle: ModelBundle) -> None:
    global _WORKER_BUNDLE
    _WORKER_BUNDLE = bundle


def _predict_in_worker(session: Session) -> SessionPrediction:
    assert _WORKER_BUNDLE is not None
    return predict_session(_WORKER_BUNDLE, session)


def stream_predict(
    bundle: ModelBundle,
    events: Iterable[ClickEvent],
    idle_timeout_seconds: float,
    diagnostics: StreamDiagnostics | None = None,
) -> Iterator[SessionPrediction]:
    """Predict sessions from a live click stream using event-time timeouts.

    Events must be in non-decreasing timestamp order within each
    session; interleaving across sessions is arbitrary. A session is
    finalized when the stream clock moves more than the timeout past
    its last click, or at end of stream. Events for already-finalized
    sessions are dropped and counted, never raised.
    """
    if idle_timeout_seconds <= 0:
        raise ConfigError(f"idle timeout must be > 0, got {idle_timeout_seconds!r}")
    timeout = timedelta(seconds=idle_timeout_seconds)
    open_clicks: dict[int, list[ClickEvent]] = {}
    last_seen: dict[int, datetime] = {}
    finalized: set[int] = set()
    expiry_heap: list[tuple[datetime, int]] = []
    watermark: datetime | None = None

    def finalize(sid: int) -> SessionPrediction:
        clicks = open_clicks.pop(sid)
        del last_seen[sid]
        finalized.add(sid)
        if diagnostics is not None:
            diagnostics.finalized_sessions += 1
        return predict_session(bundle, Session.build(sid, clicks))

    for event in events:
        sid = event.session_id
        if sid in finalized:
            if diagnostics is not None:
                diagnostics.late_events += 1
            continue
        bucket = open_clicks.get(sid)
        if bucket is None:
            open_clicks[sid] = [event]
        else:
            bucket.append(event)
        last_seen[sid] = event.timestamp
        heapq.heappush(expiry_heap, (event.timestamp, sid))
        if watermark is None or event.timestamp > watermark:
            watermark = event.timestamp
        while expiry_heap and expiry_heap[0][0] + timeout < watermark:
            ts, stale_sid = heapq.heappop(expiry_heap)
            if stale_sid in finalized or last_seen.get(stale_sid) != ts:
                continue  # superseded by a newer event for that session
            yield finalize(stale_sid)

    for sid in list(open_clicks):
        yield finalize(sid)


def write_solution(
    predictions: Iterable[SessionPrediction], dest: "str | os.PathLike[str] | IO[str]"
) -> int:
    """Write predictions as ``session_id;item,item,...`` lines.

    Sessions with no predicted items are omitted. Returns the number of
    lines written.
    """
    own, stream = _open_out(dest)
    written = 0
    try:
        for pred in predictions:
            if not pred.predicted_items:
                continue
            items = ",".join(str(i) for i in sorted(pred.predicted_items))
            stream.write(f"{pred.session_id};{items}\n")
            written += 1
    finally:
        if own:
            stream.close()
    return written


def read_solution(source: "str | os.PathLike[str] | IO[str]") -> list[SessionPrediction]:
    """Parse a ``session_id;item,item,...`` solution file."""
    own, stream = _open_in(source)
    predictions: list[SessionPrediction] = []
    try:
        for line_no, line in enumerate(stream, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                sid_text, _, items_text = text.partition(";")
                sid = int(sid_text)
                items = frozenset(int(i) for i in items_text.split(",") if i)
            except ValueError as exc:
                raise DataError(f"bad solution line {line_no}: {text!r}") from exc
            predictions.append(SessionPrediction(sid, items))
    finally:
        if own:
            stream.close()
    return predictions


# --- bundle persistence ------------------------------------------------


def bundle_to_bytes(bundle: ModelBundle) -> bytes:
    """Serialize a bundle to canonical JSON (stable bytes for equal bundles)."""
    payload = {
        "format": FORMAT_NAME,
        "format_version": bundle.format_version,
        "feature_config": _feature_config_payload(bundle.feature_config),
        "feature_config_sha256": feature_config_checksum(bundle.feature_config),
        "likelihood": _model_payload(bundle.likelihood),
        "popularity": _popularity_payload(bundle.popularity),
        "thresholds": {"t1": bundle.thresholds.t1, "t2": bundle.thresholds.t2},
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def bundle_from_bytes(data: bytes) -> ModelBundle:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"model artifact is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_NAME:
        raise ArtifactError("not a model bundle artifact")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ArtifactError(
            f"unsupported artifact version {version!r}; expected {FORMAT_VERSION}"
        )
    try:
        feature_config = _feature_config_from(payload["feature_config"])
        stored_sum = payload["feature_config_sha256"]
        actual_sum = feature_config_checksum(feature_config)
        if stored_sum != actual_sum:
            raise ArtifactError(
                "feature configuration checksum mismatch: artifact was altered "
                f"(stored {stored_sum[:12]}..., recomputed {actual_sum[:12]}...)"
            )
        model = _model_from(payload["likelihood"], feature_config)
        table = _popularity_from(payload["popularity"])
        thresholds = Thresholds(**payload["thresholds"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"malformed model artifact: {exc}") from exc
    return ModelBundle(
        likelihood=model,
        popularity=table,
        thresholds=thresholds,
        format_version=version,
    )


def save_bundle(bundle: ModelBundle, path: "str | os.PathLike[str]") -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(bundle_to_bytes(bundle))


def load_bundle(path: "str | os.PathLike[str]") -> ModelBundle:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ArtifactError(f"cannot read model artifact {path}: {exc}") from exc
    return bundle_from_bytes(data)


def feature_config_checksum(config: FeatureConfig) -> str:
    canonical = json.dumps(
        _feature_config_payload(config), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _feature_config_payload(config: FeatureConfig) -> dict:
    return {
        "enabled": list(config.enabled),
        "click_count_cap": config.click_count_cap,
        "duration_cap_minutes": config.duration_cap_minutes,
    }


def _feature_config_from(payload: dict) -> FeatureConfig:
    return FeatureConfig(
        enabled=tuple(payload["enabled"]),
        click_count_cap=payload["click_count_cap"],
        duration_cap_minutes=payload["duration_cap_minutes"],
    )


def _encode_counts(counts: dict[tuple[int, ...], int]) -> dict[str, int]:
    return {",".join(map(str, key)): count for key, count in counts.items()}


def _decode_counts(payload: dict[str, int]) -> dict[tuple[int, ...], int]:
    return {
        tuple(int(part) for part in key.split(",")): count
        for key, count in payload.items()
    }


def _model_payload(model: LikelihoodModel) -> dict:
    payload = {
        "mode": model.mode,
        "alpha": model.alpha,
        "total_buy": model.total_buy,
        "total_nonbuy": model.total_nonbuy,
    }
    if model.mode == MODE_JOINT:
        payload["buy_counts"] = _encode_counts(model.buy_counts)
        payload["nonbuy_counts"] = _encode_counts(model.nonbuy_counts)
    else:
        payload["buy_marginals"] = [
            {str(v): c for v, c in table.items()} for table in model.buy_marginals
        ]
        payload["nonbuy_marginals"] = [
            {str(v): c for v, c in table.items()} for table in model.nonbuy_marginals
        ]
    return payload


def _model_from(payload: dict, feature_config: FeatureConfig) -> LikelihoodModel:
    mode = payload["mode"]
    model = LikelihoodModel(
        mode=mode,
        alpha=payload["alpha"],
        feature_config=feature_config,
        total_buy=payload["total_buy"],
        total_nonbuy=payload["total_nonbuy"],
        buy_counts=_decode_counts(payload["buy_counts"]) if mode == MODE_JOINT else {},
        nonbuy_counts=_decode_counts(payload["nonbuy_counts"])
        if mode == MODE_JOINT
        else {},
        buy_marginals=tuple(
            {int(v): c for v, c in table.items()} for table in payload["buy_marginals"]
        )
        if mode == MODE_INDEPENDENT
        else (),
        nonbuy_marginals=tuple(
            {int(v): c for v, c in table.items()}
            for table in payload["nonbuy_marginals"]
        )
        if mode == MODE_INDEPENDENT
        else (),
    )
    model.refresh_domains()
    return model


def _popularity_payload(table: PopularityTable) -> dict:
    return {
        "buy_definition": table.buy_definition,
        "bounds": {"low_max": table.bounds.low_max, "med_max": table.bounds.med_max},
        "counts": {
            str(item): [buys, clicks] for item, (buys, clicks) in table.counts.items()
        },
    }


def _popularity_from(payload: dict) -> PopularityTable:
    return PopularityTable(
        counts={
            int(item): (pair[0], pair[1]) for item, pair in payload["counts"].items()
        },
        bounds=CategoryBounds(**payload["bounds"]),
        buy_definition=payload["buy_definition"],
    )


def _open_out(dest):
    if isinstance(dest, (str, os.PathLike)):
        Path(dest).parent.mkdir(parents=True, exist_ok=True)
        return True, open(dest, "w", encoding="utf-8", newline="")
    return False, dest


def _open_in(source):
    if isinstance(source, (str, os.PathLike)):
        try:
            return True, open(source, "r", encoding="utf-8", newline="")
        except OSError as exc:
            raise DataError(f"cannot read {source}: {exc}") from exc
    return False, source
