"""Command-line entry point.

Subcommands: gen, train, predict, eval, cv, sweep, stream, stats.
Settings resolve as defaults < config file (--config) < flags; pass
--print-config to see the effective values. Exit codes: 0 success,
1 data/artifact error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import evaluation, reports, synth
from .config import Config
from .errors import ArtifactError, BuyPredictError, ConfigError, DataError
from .ingest import (
    IngestDiagnostics,
    RejectLog,
    assemble_sessions,
    parse_buys,
    parse_clicks,
)
from .pipeline import (
    StreamDiagnostics,
    load_bundle,
    predict_batch,
    read_solution,
    save_bundle,
    stream_predict,
    train,
    write_solution,
)
from .popularity import CategoryBounds, build_popularity

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2

log = logging.getLogger("buypredict")


class UsageError(BuyPredictError):
    """Bad command line; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2)
        raise UsageError(message)


def main() -> None:
    sys.exit(run(sys.argv[1:]))


def run(argv) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if ns.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = Config.from_sources(ns.config, _overrides(ns))
        if ns.print_config:
            print(config.to_text(), end="")
        return ns.handler(config, ns)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def build_parser() -> _Parser:
    parser = _Parser(prog="buypredict", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser) -> None:
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--print-config", action="store_true", help="print effective settings")
        p.add_argument("-v", "--verbose", action="store_true")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, help="0 = one per processor")

    def model_settings(p: _Parser) -> None:
        p.add_argument("--features", help="comma-separated feature subset")
        p.add_argument("--click-cap", type=int, dest="click_cap")
        p.add_argument("--duration-cap", type=int, dest="duration_cap")
        p.add_argument("--mode", choices=("joint", "independent"))
        p.add_argument("--alpha", type=float)
        p.add_argument("--buy-definition", choices=("events", "sessions", "quantity"),
                       dest="buy_definition")
        p.add_argument("--pop-low-max", type=float, dest="pop_low_max")
        p.add_argument("--pop-med-max", type=float, dest="pop_med_max")
        p.add_argument("--t1", type=float)
        p.add_argument("--t2", type=float)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--sessions", type=int, dest="synth_sessions")
    p.add_argument("--items", type=int, dest="synth_items")
    p.add_argument("--buy-fraction", type=float, dest="synth_buy_fraction")
    p.add_argument("--min-clicks", type=int, dest="synth_min_clicks")
    p.add_argument("--max-clicks", type=int, dest="synth_max_clicks")
    p.add_argument("--repeat-prob", type=float, dest="synth_repeat_prob")
    p.add_argument("--start", dest="synth_start", help="first day, YYYY-MM-DD")
    p.add_argument("--days", type=int, dest="synth_days")
    p.add_argument("--item-popularity", dest="synth_item_popularity",
                   help="comma-separated planted per-item rates")
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("train", help="fit a model bundle from click/buy logs")
    common(p)
    p.add_argument("--clicks")
    p.add_argument("--buys")
    p.add_argument("--model", help="output path for the bundle")
    p.add_argument("--reject-log", dest="reject_log")
    model_settings(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", help="batch-predict buy sessions from clicks")
    common(p)
    p.add_argument("--model")
    p.add_argument("--clicks")
    p.add_argument("--output", help="solution file to write")
    p.add_argument("--reject-log", dest="reject_log")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against labeled data")
    common(p)
    p.add_argument("--clicks")
    p.add_argument("--buys")
    p.add_argument("--model")
    p.add_argument("--solution", help="score an existing solution file instead")
    p.add_argument("--holdout", action="store_true",
                   help="split the data, train on the rest, score the held-out part")
    p.add_argument("--test-fraction", type=float, dest="test_fraction")
    p.add_argument("--output", help="write the report as CSV")
    model_settings(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    common(p)
    p.add_argument("--clicks")
    p.add_argument("--buys")
    p.add_argument("--k", type=int)
    p.add_argument("--output", help="write per-fold rows as CSV")
    model_settings(p)
    p.set_defaults(handler=cmd_cv)

    p = sub.add_parser("sweep", help="cross-validated threshold grid sweep")
    common(p)
    p.add_argument("--clicks")
    p.add_argument("--buys")
    p.add_argument("--k", type=int)
    p.add_argument("--t1-grid", dest="t1_grid", help="comma-separated t1 values")
    p.add_argument("--t2-grid", dest="t2_grid", help="comma-separated t2 values")
    p.add_argument("--output", help="write one row per grid cell as CSV")
    model_settings(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("stream", help="predict sessions from a live click stream")
    common(p)
    p.add_argument("--model")
    p.add_argument("--clicks", help="click CSV path, or - for stdin")
    p.add_argument("--output", help="solution file (default: stdout)")
    p.add_argument("--idle-timeout", type=float, dest="idle_timeout",
                   help="seconds of event-time inactivity that close a session")
    p.set_defaults(handler=cmd_stream)

    p = sub.add_parser("stats", help="descriptive aggregations of a dataset")
    common(p)
    p.add_argument("--clicks")
    p.add_argument("--buys")
    p.add_argument("--out-dir", dest="out_dir", help="write CSV files here (default: stdout)")
    model_settings(p)
    p.set_defaults(handler=cmd_stats)

    return parser


def _overrides(ns: argparse.Namespace) -> dict:
    skip = {"command", "handler", "config", "print_config", "verbose", "holdout"}
    valid = set(Config.field_names())
    return {
        key: value
        for key, value in vars(ns).items()
        if key not in skip and key in valid and value is not None
    }


def _load_sessions(config: Config, with_buys: bool = True):
    rejects = RejectLog()
    diagnostics = IngestDiagnostics()
    clicks = list(parse_clicks(config.clicks, rejects))
    buys = list(parse_buys(config.buys, rejects)) if with_buys and config.buys else []
    sessions = assemble_sessions(clicks, buys, diagnostics)
    if rejects.records:
        log.warning("rejected %d malformed lines", len(rejects))
    if config.reject_log:
        rejects.write_csv(config.reject_log)
    if diagnostics.orphan_buys:
        log.warning(
            "dropped %d buys in %d session(s) without clicks",
            diagnostics.orphan_buys,
            diagnostics.orphan_buy_sessions,
        )
    return sessions, clicks, buys


def _print_report(report: evaluation.EvalReport) -> None:
    buy_pct = (
        100.0 * report.n_buy_sessions / report.n_test_sessions
        if report.n_test_sessions
        else 0.0
    )
    print(
        f"sessions: {report.n_test_sessions} "
        f"(buy sessions: {report.n_buy_sessions}, {buy_pct:.2f}%)"
    )
    print(f"score: {report.score:.4f}")
    print(
        f"session-level: TP {report.tp_rate_session:.2f}% FP {report.fp_rate_session:.2f}% "
        f"(tp={report.tp_session} fp={report.fp_session} "
        f"tn={report.tn_session} fn={report.fn_session})"
    )
    print(
        f"item-level:    TP {report.tp_rate_item:.2f}% FP {report.fp_rate_item:.2f}% "
        f"(unreachable positives: {report.unreachable_positives})"
    )


def _require(config: Config, *names: str) -> None:
    missing = [name for name in names if not getattr(config, name)]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        raise UsageError(f"missing required setting(s): {flags}")


def cmd_gen(config: Config, ns) -> int:
    out_dir = config.out_dir or "."
    files = synth.write_dataset(config.synth_config(), out_dir)
    result = synth.generate(config.synth_config())
    n_buy_sessions = len({b.session_id for b in result.buys})
    print(f"wrote {files.clicks} ({len(result.clicks)} clicks)")
    print(f"wrote {files.buys} ({len(result.buys)} buys, {n_buy_sessions} buy sessions)")
    print(f"wrote {files.manifest} ({len(result.manifest)} instances)")
    return EXIT_OK


def cmd_train(config: Config, ns) -> int:
    _require(config, "clicks", "buys", "model")
    sessions, clicks, buys = _load_sessions(config)
    bundle = train(list(sessions.values()), config.train_config())
    save_bundle(bundle, config.model)
    rate = evaluation.buy_session_rate(list(sessions.values()))
    print(
        f"trained on {len(sessions)} sessions "
        f"({float(rate) * 100:.2f}% buy), model written to {config.model}"
    )
    return EXIT_OK


def cmd_predict(config: Config, ns) -> int:
    _require(config, "model", "clicks", "output")
    bundle = load_bundle(config.model)
    sessions, _, _ = _load_sessions(config, with_buys=False)
    ordered = list(sessions.values())
    preds = predict_batch(bundle, ordered, workers=config.effective_workers())
    written = write_solution(preds, config.output)
    print(f"predicted buys for {written} of {len(ordered)} sessions -> {config.output}")
    return EXIT_OK


def cmd_eval(config: Config, ns) -> int:
    _require(config, "clicks", "buys")
    sessions, _, _ = _load_sessions(config)
    ordered = list(sessions.values())
    if config.solution:
        preds = read_solution(config.solution)
        predicted_ids = {p.session_id for p in preds}
        preds.extend(
            evaluation.SessionPrediction(s.session_id, frozenset())
            for s in ordered
            if s.session_id not in predicted_ids
        )
    elif ns.holdout:
        train_part, test_part = evaluation.holdout_split(
            ordered, config.test_fraction, config.seed
        )
        rate = evaluation.buy_session_rate(test_part)
        print(
            f"holdout: {len(train_part)} train / {len(test_part)} test sessions "
            f"(test buy rate {float(rate) * 100:.2f}%)"
        )
        bundle = train(train_part, config.train_config())
        ordered = test_part
        preds = predict_batch(bundle, ordered, workers=config.effective_workers())
    elif config.model:
        bundle = load_bundle(config.model)
        preds = predict_batch(bundle, ordered, workers=config.effective_workers())
    else:
        raise UsageError("eval needs --model, --solution, or --holdout")
    report = evaluation.confusion(preds, ordered)
    _print_report(report)
    if config.output:
        evaluation.write_eval_csv(report, config.output)
        print(f"report written to {config.output}")
    return EXIT_OK


def cmd_cv(config: Config, ns) -> int:
    _require(config, "clicks", "buys")
    sessions, _, _ = _load_sessions(config)
    result = evaluation.kfold(
        list(sessions.values()),
        k=config.k,
        seed=config.seed,
        config=config.train_config(),
        workers=config.effective_workers(),
    )
    for i, fold in enumerate(result.folds, start=1):
        print(
            f"fold {i}: score {fold.score:.4f} "
            f"TP {fold.tp_rate_session:.2f}% FP {fold.fp_rate_session:.2f}%"
        )
    for name in evaluation.METRIC_NAMES:
        summary = result.aggregate[name]
        print(f"{name}: {summary.mean:.4f} ± {summary.std:.4f}")
    if config.output:
        evaluation.write_cv_csv(result, config.output)
        print(f"report written to {config.output}")
    return EXIT_OK


def cmd_sweep(config: Config, ns) -> int:
    _require(config, "clicks", "buys")
    sessions, _, _ = _load_sessions(config)
    cells = evaluation.threshold_sweep(
        list(sessions.values()),
        t1_grid=config.t1_values(),
        t2_grid=config.t2_values(),
        k=config.k,
        seed=config.seed,
        config=config.train_config(),
        workers=config.effective_workers(),
    )
    for cell in cells:
        agg = cell.cv.aggregate
        print(
            f"t1={cell.t1} t2={cell.t2}: score {agg['score'].mean:.4f} "
            f"TP {agg['tp_rate_session'].mean:.2f}% "
            f"FP {agg['fp_rate_session'].mean:.2f}%"
        )
    if config.output:
        evaluation.write_sweep_csv(cells, config.output)
        print(f"report written to {config.output}")
    return EXIT_OK


def cmd_stream(config: Config, ns) -> int:
    _require(config, "model", "clicks")
    bundle = load_bundle(config.model)
    if config.idle_timeout <= 0:
        raise ConfigError("idle_timeout must be > 0")
    diagnostics = StreamDiagnostics()
    rejects = RejectLog()
    source = sys.stdin if config.clicks == "-" else config.clicks
    events = parse_clicks(source, rejects)
    out_stream = (
        open(config.output, "w", encoding="utf-8", newline="")
        if config.output
        else sys.stdout
    )
    try:
        for pred in stream_predict(bundle, events, config.idle_timeout, diagnostics):
            if pred.predicted_items:
                items = ",".join(str(i) for i in sorted(pred.predicted_items))
                out_stream.write(f"{pred.session_id};{items}\n")
                out_stream.flush()
    finally:
        if config.output:
            out_stream.close()
    log.info(
        "finalized %d sessions (%d late events, %d rejected lines)",
        diagnostics.finalized_sessions,
        diagnostics.late_events,
        len(rejects),
    )
    return EXIT_OK


def cmd_stats(config: Config, ns) -> int:
    _require(config, "clicks", "buys")
    sessions, clicks, buys = _load_sessions(config)
    fc = config.feature_config()
    bounds = CategoryBounds(config.pop_low_max, config.pop_med_max)
    table = build_popularity(
        clicks, buys, buy_definition=config.buy_definition, bounds=bounds
    )
    ordered = list(sessions.values())
    sections = {
        "buys_by_day_of_month": reports.buys_by_day_of_month(buys),
        "buys_by_day_of_week": reports.buys_by_day_of_week(buys),
        "buy_rate_by_click_count": reports.buy_rate_by_click_count(ordered, fc),
        "buy_rate_by_duration": reports.buy_rate_by_duration(ordered, fc),
        "buys_by_popularity_category": reports.buys_by_popularity_category(table, buys),
        "popularity_category_counts": reports.popularity_category_counts(table),
        "popularity_histogram": reports.popularity_histogram(table),
    }
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, (header, rows) in sections.items():
            reports.write_rows(out / f"{name}.csv", header, rows)
            print(f"wrote {out / (name + '.csv')}")
    else:
        for name, (header, rows) in sections.items():
            print(f"# {name}")
            reports.write_rows(sys.stdout, header, rows)
    return EXIT_OK


if __name__ == "__main__":
    main()
