"""Prediction scoring, k-fold cross-validation, and threshold sweeps.

Metrics are reported at two granularities. Session level treats a
session as positive when any buy is predicted/observed. Item level
scores each clicked (session, item) pair; items bought but never
clicked are unreachable by any click-based predictor and are tallied
separately instead of polluting the confusion table.

The competition-style score adds, for every session predicted as a buy,
the buy-session share of the test set plus the Jaccard similarity of
predicted vs bought items when the session really bought, and subtracts
the buy-session share when it did not.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import ConfigError, DataError
from .features import extract_instances
from .ingest import Session
from .likelihood import Thresholds
from .pipeline import (
    ModelBundle,
    SessionPrediction,
    TrainConfig,
    predict_batch,
    train,
)

METRIC_NAMES = (
    "score",
    "tp_rate_session",
    "fp_rate_session",
    "tp_rate_item",
    "fp_rate_item",
)


@dataclass(frozen=True, slots=True)
class EvalReport:
    score: float
    tp_rate_session: float
    fp_rate_session: float
    tp_rate_item: float
    fp_rate_item: float
    tp_session: int
    fp_session: int
    tn_session: int
    fn_session: int
    tp_item: int
    fp_item: int
    tn_item: int
    fn_item: int
    unreachable_positives: int
    n_test_sessions: int
    n_buy_sessions: int

    def metric(self, name: str) -> float:
        return getattr(self, name)


@dataclass(frozen=True, slots=True)
class MetricSummary:
    mean: float
    std: float


@dataclass(frozen=True, slots=True)
class CvResult:
    folds: tuple[EvalReport, ...]
    aggregate: dict[str, MetricSummary]


@dataclass(frozen=True, slots=True)
class SweepCell:
    t1: float
    t2: float
    cv: CvResult


def confusion(
    preds: Sequence[SessionPrediction], truth: Sequence[Session]
) -> EvalReport:
    """Score predictions against labeled sessions at both granularities."""
    by_sid = {p.session_id: p for p in preds}
    _check_session_ids(by_sid, truth, require_equal=True)

    tp_s = fp_s = tn_s = fn_s = 0
    tp_i = fp_i = tn_i = fn_i = 0
    unreachable = 0
    n_buy_sessions = 0

    for session in truth:
        pred = by_sid[session.session_id]
        actual_buy = session.is_buy
        predicted_buy = pred.session_is_buy
        if actual_buy:
            n_buy_sessions += 1
            if predicted_buy:
                tp_s += 1
            else:
                fn_s += 1
        elif predicted_buy:
            fp_s += 1
        else:
            tn_s += 1

        clicked = session.clicked_items
        bought = session.bought_items
        predicted = pred.predicted_items
        unreachable += len(bought - clicked)
        for item in clicked:
            item_bought = item in bought
            item_predicted = item in predicted
            if item_bought and item_predicted:
                tp_i += 1
            elif item_bought:
                fn_i += 1
            elif item_predicted:
                fp_i += 1
            else:
                tn_i += 1

    return EvalReport(
        score=float(recsys_score(preds, truth)),
        tp_rate_session=_rate(tp_s, tp_s + fn_s),
        fp_rate_session=_rate(fp_s, fp_s + tn_s),
        tp_rate_item=_rate(tp_i, tp_i + fn_i),
        fp_rate_item=_rate(fp_i, fp_i + tn_i),
        tp_session=tp_s,
        fp_session=fp_s,
        tn_session=tn_s,
        fn_session=fn_s,
        tp_item=tp_i,
        fp_item=fp_i,
        tn_item=tn_i,
        fn_item=fn_i,
        unreachable_positives=unreachable,
        n_test_sessions=len(truth),
        n_buy_sessions=n_buy_sessions,
    )


def recsys_score(
    preds: Sequence[SessionPrediction], truth: Sequence[Session]
) -> Fraction:
    """Exact competition-style score of buy-session predictions.

    Predicting a real buy session earns |buy sessions|/|sessions| plus
    the Jaccard similarity between predicted and bought item sets;
    predicting a non-buy session costs |buy sessions|/|sessions|.
    Sessions without a (non-empty) prediction contribute nothing.
    """
    sessions_by_id = {s.session_id: s for s in truth}
    if len(sessions_by_id) != len(truth):
        raise DataError("duplicate session ids in truth")
    unknown = [p.session_id for p in preds if p.session_id not in sessions_by_id]
    if unknown:
        raise DataError(f"predictions for unknown sessions: {sorted(unknown)[:10]}")

    n_sessions = len(truth)
    n_buy = sum(1 for s in truth if s.is_buy)
    buy_share = Fraction(n_buy, n_sessions) if n_sessions else Fraction(0)

    score = Fraction(0)
    for pred in preds:
        if not pred.predicted_items:
            continue
        session = sessions_by_id[pred.session_id]
        if session.is_buy:
            intersection = len(pred.predicted_items & session.bought_items)
            union = len(pred.predicted_items | session.bought_items)
            score += buy_share + Fraction(intersection, union)
        else:
            score -= buy_share
    return score


def holdout_split(
    sessions: Sequence[Session], test_fraction: float, seed: int
) -> tuple[list[Session], list[Session]]:
    """Seeded random split by session; returns (train, test)."""
    if not (0 < test_fraction < 1):
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction!r}")
    order = list(sessions)
    random.Random(seed).shuffle(order)
    n_test = int(round(len(order) * test_fraction))
    return order[n_test:], order[:n_test]


def buy_session_rate(sessions: Sequence[Session]) -> Fraction:
    """Exact fraction of sessions with at least one buy."""
    if not sessions:
        return Fraction(0)
    return Fraction(sum(1 for s in sessions if s.is_buy), len(sessions))


def assign_folds(
    sessions: Sequence[Session], k: int, seed: int
) -> list[list[Session]]:
    """Seeded shuffle into k folds whose sizes differ by at most one."""
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if k > len(sessions):
        raise ConfigError(f"k={k} exceeds the number of sessions ({len(sessions)})")
    order = list(sessions)
    random.Random(seed).shuffle(order)
    return [order[i::k] for i in range(k)]


def kfold(
    sessions: Sequence[Session],
    k: int,
    seed: int,
    config: TrainConfig = TrainConfig(),
    workers: int = 1,
) -> CvResult:
    """Cross-validate: each fold is scored by a model trained on the rest."""
    folds = assign_folds(sessions, k, seed)
    tasks = [
        ([s for j, fold in enumerate(folds) if j != i for s in fold], test_fold, config)
        for i, test_fold in enumerate(folds)
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            reports = list(pool.map(_evaluate_fold, tasks))
    else:
        reports = [_evaluate_fold(task) for task in tasks]
    return CvResult(folds=tuple(reports), aggregate=summarize(reports))


def _evaluate_fold(
    task: tuple[list[Session], Sequence[Session], TrainConfig]
) -> EvalReport:
    train_sessions, test_fold, config = task
    bundle = train(train_sessions, config)
    preds = predict_batch(bundle, test_fold)
    return confusion(preds, test_fold)


def summarize(reports: Sequence[EvalReport]) -> dict[str, MetricSummary]:
    """Mean and sample standard deviation of each headline metric."""
    out: dict[str, MetricSummary] = {}
    for name in METRIC_NAMES:
        values = [report.metric(name) for report in reports]
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        out[name] = MetricSummary(mean=statistics.fmean(values), std=std)
    return out


def threshold_sweep(
    sessions: Sequence[Session],
    t1_grid: Sequence[float],
    t2_grid: Sequence[float],
    k: int,
    seed: int,
    config: TrainConfig = TrainConfig(),
    workers: int = 1,
) -> list[SweepCell]:
    """Cross-validated metrics for every (t1, t2) pair.

    Models are fitted once per fold and reused for every cell, which is
    exact because thresholds play no part in fitting. Cells come back
    in row-major order: t1 varies slowest.
    """
    if not t1_grid or not t2_grid:
        raise ConfigError("threshold grids must be non-empty")
    folds = assign_folds(sessions, k, seed)
    tasks = [
        ([s for j, fold in enumerate(folds) if j != i for s in fold], test_fold, config)
        for i, test_fold in enumerate(folds)
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            scored_folds = list(pool.map(_score_fold, tasks))
    else:
        scored_folds = [_score_fold(task) for task in tasks]

    cells = []
    for t1 in t1_grid:
        for t2 in t2_grid:
            thresholds = Thresholds(t1, t2)
            t2_exact = Fraction(t2)
            num, den = t2_exact.numerator, t2_exact.denominator
            reports = []
            for scored_sessions in scored_folds:
                preds = []
                fold_sessions = []
                for session, rows in scored_sessions:
                    items = frozenset(
                        item
                        for item, ratio, known, buys_n, clicks in rows
                        if ratio > t1 and (not known or buys_n * den > num * clicks)
                    )
                    preds.append(SessionPrediction(session.session_id, items))
                    fold_sessions.append(session)
                reports.append(confusion(preds, fold_sessions))
            cells.append(
                SweepCell(
                    t1=t1,
                    t2=t2,
                    cv=CvResult(folds=tuple(reports), aggregate=summarize(reports)),
                )
            )
    return cells


def _score_fold(
    task: tuple[list[Session], Sequence[Session], TrainConfig]
) -> list[tuple[Session, list[tuple[int, float, bool, int, int]]]]:
    """Precompute per-instance (item, ratio, has_popularity, buys*n, clicks).

    Thresholds are applied later per sweep cell; everything else about a
    decision is already fixed by the fold's fitted counts.
    """
    train_sessions, test_fold, config = task
    bundle = train(train_sessions, config)
    model = bundle.likelihood
    counts = bundle.popularity.counts
    scored_sessions = []
    for session in test_fold:
        rows = []
        for inst in extract_instances(session, bundle.feature_config):
            ratio = model.likelihood_ratio(inst.features)
            pair = counts.get(inst.item_id)
            if pair is None or pair[1] == 0:
                rows.append((inst.item_id, ratio, False, 0, 0))
            else:
                rows.append(
                    (inst.item_id, ratio, True, pair[0] * inst.click_count, pair[1])
                )
        scored_sessions.append((session, rows))
    return scored_sessions


REPORT_FIELDS = (
    "score",
    "tp_rate_session",
    "fp_rate_session",
    "tp_rate_item",
    "fp_rate_item",
    "tp_session",
    "fp_session",
    "tn_session",
    "fn_session",
    "tp_item",
    "fp_item",
    "tn_item",
    "fn_item",
    "unreachable_positives",
    "n_test_sessions",
    "n_buy_sessions",
)


def write_eval_csv(report: EvalReport, dest) -> None:
    _write_csv(dest, REPORT_FIELDS, [[getattr(report, f) for f in REPORT_FIELDS]])


def write_cv_csv(result: CvResult, dest) -> None:
    """One row per fold plus mean/std rows for the headline metrics."""
    header = ["fold", *REPORT_FIELDS]
    rows: list[list] = [
        [i + 1, *[getattr(report, f) for f in REPORT_FIELDS]]
        for i, report in enumerate(result.folds)
    ]
    for stat in ("mean", "std"):
        row: list = [stat]
        for name in REPORT_FIELDS:
            if name in result.aggregate:
                row.append(getattr(result.aggregate[name], stat))
            else:
                row.append("")
        rows.append(row)
    _write_csv(dest, header, rows)


def write_sweep_csv(cells: Sequence[SweepCell], dest) -> None:
    """One row per grid cell with mean/std of each headline metric."""
    header = ["t1", "t2"]
    for name in METRIC_NAMES:
        header.extend([f"{name}_mean", f"{name}_std"])
    rows = []
    for cell in cells:
        row: list = [cell.t1, cell.t2]
        for name in METRIC_NAMES:
            summary = cell.cv.aggregate[name]
            row.extend([summary.mean, summary.std])
        rows.append(row)
    _write_csv(dest, header, rows)


def _write_csv(dest, header, rows) -> None:
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


def _rate(count: int, denom: int) -> float:
    return 100.0 * count / denom if denom else 0.0


def _check_session_ids(
    by_sid: dict[int, SessionPrediction],
    truth: Iterable[Session],
    require_equal: bool,
) -> None:
    truth_ids = {s.session_id for s in truth}
    missing_preds = sorted(truth_ids - by_sid.keys())
    extra_preds = sorted(by_sid.keys() - truth_ids)
    if (missing_preds and require_equal) or extra_preds:
        parts = []
        if missing_preds:
            parts.append(f"sessions without predictions: {missing_preds[:10]}")
        if extra_preds:
            parts.append(f"predictions for unknown sessions: {extra_preds[:10]}")
        raise DataError("; ".join(parts))
