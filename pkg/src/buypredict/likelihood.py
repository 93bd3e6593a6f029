"""Count-based conditional model and the step-1 likelihood-ratio filter.

The model estimates P(features | buy) and P(features | non-buy) from
training counts and scores an instance by their ratio; step-1 keeps
instances whose ratio exceeds a threshold.

Two table layouts are supported:

* ``joint``: one count per full feature key. Faithful to the ratio of
  joint conditional probabilities, but sparse when many features are
  enabled.
* ``independent``: per-feature marginal counts combined as a product of
  per-feature ratios (naive-Bayes style).

Additive smoothing spreads ``alpha`` pseudo-counts over the observed
key domain plus one reserved slot for unseen keys, so never-seen
combinations still score finitely. ``alpha=0`` reproduces raw count
ratios with sentinel handling for empty denominators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .errors import ConfigError, FitError
from .features import FeatureConfig, FeatureKey, FeatureVector, Instance

MODE_JOINT = "joint"
MODE_INDEPENDENT = "independent"
MODES = (MODE_JOINT, MODE_INDEPENDENT)


@dataclass(frozen=True, slots=True)
class Thresholds:
    """Decision thresholds for the two filter steps.

    Zero is allowed on both (it turns the corresponding filter into a
    pass-everything-with-positive-score gate), negatives are not.
    """

    t1: float
    t2: float

    def __post_init__(self) -> None:
        for name, value in (("t1", self.t1), ("t2", self.t2)):
            if not (value >= 0) or math.isnan(value):
                raise ConfigError(f"{name} must be >= 0, got {value!r}")


@dataclass(slots=True)
class LikelihoodModel:
    """Fitted count tables with totals and smoothing.

    For ``joint`` mode, ``buy_counts``/``nonbuy_counts`` map feature
    keys to instance counts. For ``independent`` mode, the marginal
    tuples hold one value->count table per enabled feature. Totals are
    the number of buy / non-buy training instances.
    """

    mode: str
    alpha: float
    feature_config: FeatureConfig
    total_buy: int
    total_nonbuy: int
    buy_counts: dict[FeatureKey, int] = field(default_factory=dict)
    nonbuy_counts: dict[FeatureKey, int] = field(default_factory=dict)
    buy_marginals: tuple[dict[int, int], ...] = ()
    nonbuy_marginals: tuple[dict[int, int], ...] = ()
    # cached domain sizes (observed + 1 reserved unseen), derived in __post_init__
    key_domain: int = field(init=False, repr=False, compare=False, default=1)
    marginal_domains: tuple[int, ...] = field(
        init=False, repr=False, compare=False, default=()
    )
    _key_of: Callable[[FeatureVector], FeatureKey] = field(
        init=False, repr=False, compare=False, default=None
    )

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.alpha < 0:
            raise ConfigError(f"smoothing alpha must be >= 0, got {self.alpha!r}")
        self._key_of = self.feature_config.key_getter()
        self.refresh_domains()

    def refresh_domains(self) -> None:
        """Recompute observed-domain sizes after counts change."""
        if self.mode == MODE_JOINT:
            self.key_domain = len(self.buy_counts.keys() | self.nonbuy_counts.keys()) + 1
        else:
            self.marginal_domains = tuple(
                len(b.keys() | n.keys()) + 1
                for b, n in zip(self.buy_marginals, self.nonbuy_marginals)
            )

    def score(self, fv: FeatureVector) -> tuple[float, bool]:
        """Return (likelihood ratio, unseen flag) for a binned vector.

        The flag is True when the key (joint) or any enabled feature
        value (independent) was never observed in training for either
        class. With ``alpha=0`` that case scores exactly 1.0; an
        observed-for-buy-only key scores +inf and an observed-for-
        non-buy-only key scores 0.0.
        """
        if self.mode == MODE_JOINT:
            key = self._key_of(fv)
            b = self.buy_counts.get(key, 0)
            n = self.nonbuy_counts.get(key, 0)
            return self._ratio_from_counts(b, n, self.key_domain), (b == 0 and n == 0)

        unseen = False
        if self.alpha == 0:
            num = den = 1.0
            for i, name in enumerate(self.feature_config.enabled):
                v = getattr(fv, name)
                b = self.buy_marginals[i].get(v, 0)
                n = self.nonbuy_marginals[i].get(v, 0)
                if b == 0 and n == 0:
                    unseen = True
                    continue  # out-of-support value: neutral factor
                num *= b / self.total_buy
                den *= n / self.total_nonbuy
            return _divide_with_sentinels(num, den), unseen

        ratio = 1.0
        a = self.alpha
        for i, name in enumerate(self.feature_config.enabled):
            v = getattr(fv, name)
            b = self.buy_marginals[i].get(v, 0)
            n = self.nonbuy_marginals[i].get(v, 0)
            if b == 0 and n == 0:
                unseen = True
            domain = self.marginal_domains[i]
            ratio *= ((b + a) / (self.total_buy + a * domain)) / (
                (n + a) / (self.total_nonbuy + a * domain)
            )
        return ratio, unseen

    def likelihood_ratio(self, fv: FeatureVector) -> float:
        return self.score(fv)[0]

    def _ratio_from_counts(self, b: int, n: int, domain: int) -> float:
        a = self.alpha
        if a == 0:
            if b and n:
                return (b * self.total_nonbuy) / (n * self.total_buy)
            if b:
                return math.inf
            if n:
                return 0.0
            return 1.0
        return ((b + a) / (self.total_buy + a * domain)) / (
            (n + a) / (self.total_nonbuy + a * domain)
        )


def fit(
    instances: Iterable[Instance],
    mode: str = MODE_JOINT,
    alpha: float = 1.0,
    feature_config: FeatureConfig = FeatureConfig(),
) -> LikelihoodModel:
    """Count labeled instances into a model; deterministic per input multiset.

    Raises FitError when either class is absent: a one-class table
    cannot form a ratio.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    model = LikelihoodModel(
        mode=mode,
        alpha=alpha,
        feature_config=feature_config,
        total_buy=0,
        total_nonbuy=0,
        buy_marginals=tuple({} for _ in feature_config.enabled)
        if mode == MODE_INDEPENDENT
        else (),
        nonbuy_marginals=tuple({} for _ in feature_config.enabled)
        if mode == MODE_INDEPENDENT
        else (),
    )
    key_of = feature_config.key_getter()
    total_buy = 0
    total_nonbuy = 0

    if mode == MODE_JOINT:
        buy_counts = model.buy_counts
        nonbuy_counts = model.nonbuy_counts
        for inst in instances:
            key = key_of(inst.features)
            if inst.is_buy:
                total_buy += 1
                buy_counts[key] = buy_counts.get(key, 0) + 1
            else:
                total_nonbuy += 1
                nonbuy_counts[key] = nonbuy_counts.get(key, 0) + 1
    else:
        names = feature_config.enabled
        for inst in instances:
            tables = model.buy_marginals if inst.is_buy else model.nonbuy_marginals
            if inst.is_buy:
                total_buy += 1
            else:
                total_nonbuy += 1
            fv = inst.features
            for i, name in enumerate(names):
                v = getattr(fv, name)
                table = tables[i]
                table[v] = table.get(v, 0) + 1

    missing = [
        label
        for label, total in (("buy", total_buy), ("non-buy", total_nonbuy))
        if total == 0
    ]
    if missing:
        raise FitError(f"training data has no {' or '.join(missing)} instances")
    model.total_buy = total_buy
    model.total_nonbuy = total_nonbuy
    model.refresh_domains()
    return model


def likelihood_ratio(model: LikelihoodModel, fv: FeatureVector) -> float:
    """Ratio of smoothed P(features|buy) to P(features|non-buy)."""
    return model.likelihood_ratio(fv)


def step1_filter(
    model: LikelihoodModel, instances: Sequence[Instance], t1: float
) -> list[Instance]:
    """Keep instances whose likelihood ratio exceeds t1, preserving order."""
    return [inst for inst in instances if model.likelihood_ratio(inst.features) > t1]


def merge(models: Sequence[LikelihoodModel]) -> LikelihoodModel:
    """Sum count tables of models fitted with identical configuration.

    merge(fit(A), fit(B)) equals fit(A + B); useful for parallel or
    per-fold partial fits.
    """
    if not models:
        raise ConfigError("merge needs at least one model")
    head = models[0]
    for other in models[1:]:
        if (
            other.mode != head.mode
            or other.alpha != head.alpha
            or other.feature_config != head.feature_config
        ):
            raise ConfigError("cannot merge models with differing configuration")

    merged = LikelihoodModel(
        mode=head.mode,
        alpha=head.alpha,
        feature_config=head.feature_config,
        total_buy=sum(m.total_buy for m in models),
        total_nonbuy=sum(m.total_nonbuy for m in models),
        buy_marginals=tuple({} for _ in head.feature_config.enabled)
        if head.mode == MODE_INDEPENDENT
        else (),
        nonbuy_marginals=tuple({} for _ in head.feature_config.enabled)
        if head.mode == MODE_INDEPENDENT
        else (),
    )
    if head.mode == MODE_JOINT:
        for m in models:
            _add_counts(merged.buy_counts, m.buy_counts)
            _add_counts(merged.nonbuy_counts, m.nonbuy_counts)
    else:
        for m in models:
            for dst, src in zip(merged.buy_marginals, m.buy_marginals):
                _add_counts(dst, src)
            for dst, src in zip(merged.nonbuy_marginals, m.nonbuy_marginals):
                _add_counts(dst, src)
    merged.refresh_domains()
    return merged


def empty_model(
    mode: str = MODE_JOINT,
    alpha: float = 1.0,
    feature_config: FeatureConfig = FeatureConfig(),
) -> LikelihoodModel:
    """A zero-count model, the identity element for merge."""
    return LikelihoodModel(
        mode=mode,
        alpha=alpha,
        feature_config=feature_config,
        total_buy=0,
        total_nonbuy=0,
        buy_marginals=tuple({} for _ in feature_config.enabled)
        if mode == MODE_INDEPENDENT
        else (),
        nonbuy_marginals=tuple({} for _ in feature_config.enabled)
        if mode == MODE_INDEPENDENT
        else (),
    )


def _add_counts(dst: dict, src: dict) -> None:
    for key, count in src.items():
        dst[key] = dst.get(key, 0) + count


def _divide_with_sentinels(num: float, den: float) -> float:
    if den == 0.0:
        return 1.0 if num == 0.0 else math.inf
    return num / den
