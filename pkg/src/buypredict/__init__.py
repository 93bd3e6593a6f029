"""Session-based buy prediction with two-step statistical filtering.

Step 1 scores each clicked item by the ratio of its binned feature
profile's frequency among bought vs non-bought training items. Step 2
re-filters survivors by item popularity (training buys per click) times
the in-session click count. Both steps compare against configurable
thresholds, which keeps prediction cheap enough for live click streams.
"""

from .errors import (
    ArtifactError,
    BuyPredictError,
    ConfigError,
    DataError,
    FitError,
)
from .features import (
    FEATURE_NAMES,
    FeatureConfig,
    FeatureVector,
    Instance,
    extract_instances,
    feature_key,
    session_duration_minutes,
)
from .ingest import (
    BuyEvent,
    ClickEvent,
    IngestDiagnostics,
    RejectLog,
    Session,
    assemble_sessions,
    parse_buys,
    parse_clicks,
)
from .likelihood import (
    MODE_INDEPENDENT,
    MODE_JOINT,
    LikelihoodModel,
    Thresholds,
    fit,
    likelihood_ratio,
    merge,
    step1_filter,
)
from .pipeline import (
    ModelBundle,
    SessionPrediction,
    StreamDiagnostics,
    TrainConfig,
    load_bundle,
    predict_batch,
    predict_session,
    read_solution,
    save_bundle,
    stream_predict,
    train,
    write_solution,
)
from .popularity import (
    CategoryBounds,
    PopularityEntry,
    PopularityTable,
    build_popularity,
    categorize,
    merge_popularity,
    step2_filter,
)
from .evaluation import (
    CvResult,
    EvalReport,
    MetricSummary,
    SweepCell,
    buy_session_rate,
    confusion,
    holdout_split,
    kfold,
    recsys_score,
    threshold_sweep,
)
from .synth import SynthConfig, SynthResult, generate, separable_fixture, write_dataset

__version__ = "0.1.0"

__all__ = [
    "ArtifactError",
    "BuyPredictError",
    "ConfigError",
    "DataError",
    "FitError",
    "FEATURE_NAMES",
    "FeatureConfig",
    "FeatureVector",
    "Instance",
    "extract_instances",
    "feature_key",
    "session_duration_minutes",
    "BuyEvent",
    "ClickEvent",
    "IngestDiagnostics",
    "RejectLog",
    "Session",
    "assemble_sessions",
    "parse_buys",
    "parse_clicks",
    "MODE_INDEPENDENT",
    "MODE_JOINT",
    "LikelihoodModel",
    "Thresholds",
    "fit",
    "likelihood_ratio",
    "merge",
    "step1_filter",
    "ModelBundle",
    "SessionPrediction",
    "StreamDiagnostics",
    "TrainConfig",
    "load_bundle",
    "predict_batch",
    "predict_session",
    "read_solution",
    "save_bundle",
    "stream_predict",
    "train",
    "write_solution",
    "CategoryBounds",
    "PopularityEntry",
    "PopularityTable",
    "build_popularity",
    "categorize",
    "merge_popularity",
    "step2_filter",
    "CvResult",
    "EvalReport",
    "MetricSummary",
    "SweepCell",
    "buy_session_rate",
    "confusion",
    "holdout_split",
    "kfold",
    "recsys_score",
    "threshold_sweep",
    "SynthConfig",
    "SynthResult",
    "generate",
    "separable_fixture",
    "write_dataset",
    "__version__",
]
