"""Covariate-shift simulators producing (train, test, prod) index splits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .learners.base import check_seed
from .tabular import Dataset, SplitTriple, check_fractions, distance_matrix_features


class DriftConfigError(ValueError):
    pass


def stochastic_round(x: float, rng: np.random.Generator) -> int:
    """Round ``x`` down or up so that the expectation equals ``x``."""
    lo = math.floor(x)
    return lo + int(rng.random() < x - lo)


@dataclass(frozen=True)
class LinearSkewConfig:
    """Linear-skew drift on one feature.

    ``R`` (0-100) is the percentage of each train/test batch drawn from the
    low bucket (feature value <= threshold); prod batches take the mirrored
    share. ``threshold`` defaults to the feature's median.
    """

    feature: int
    R: float
    p_tr: float
    p_te: float
    p_pr: float
    batch_size: int = 20
    threshold: float | None = None

    def validate(self, dataset: Dataset | None = None):
        if not 0.0 <= self.R <= 100.0:
            raise DriftConfigError("R must lie in [0, 100]")
        try:
            check_fractions(self.p_tr, self.p_te, self.p_pr)
        except ValueError as exc:
            raise DriftConfigError(str(exc)) from exc
        if self.batch_size < 1:
            raise DriftConfigError("batch size must be positive")
        if dataset is not None:
            if not 0 <= self.feature < dataset.X.shape[1]:
                raise DriftConfigError(f"feature index {self.feature} out of range")
            if dataset.columns[self.feature].kind != "numeric":
                raise DriftConfigError("linear-skew drift needs a numeric feature")

    def to_dict(self):
        return {"kind": "linear_skew", **asdict(self)}


def bucket_split(values, threshold=None):
    """Row indices of the low (A: value <= t) and high (B: value > t) buckets, and t.

    Missing values are replaced by the median before bucketing.
    """
    v = np.asarray(values, dtype=float)
    med = float(np.nanmedian(v)) if np.isfinite(v).any() else 0.0
    v = np.where(np.isnan(v), med, v)
    t = med if threshold is None else float(threshold)
    return np.nonzero(v <= t)[0], np.nonzero(v > t)[0], t


def linear_skew(dataset: Dataset, config: LinearSkewConfig, seed) -> SplitTriple:
    config.validate(dataset)
    rng = np.random.default_rng(check_seed(seed))
    A, B, _ = bucket_split(dataset.X[:, config.feature], config.threshold)
    A, B = list(rng.permutation(A)), list(rng.permutation(B))
    p_tt = config.p_tr + config.p_te
    r = config.R / 100.0
    b = config.batch_size
    tt, pr = [], []
    ia = ib = 0

    def take(src, i, k):
        k = min(k, len(src) - i)
        return src[i:i + k], i + k

    while len(A) - ia > b and len(B) - ib > b:
        n_tt_a = stochastic_round(p_tt * r * b, rng)
        n_tt_b = stochastic_round(p_tt * (1 - r) * b, rng)
        n_pr_a = stochastic_round(config.p_pr * (1 - r) * b, rng)
        n_pr_b = stochastic_round(config.p_pr * r * b, rng)
        got, ia = take(A, ia, n_tt_a)
        tt += got
        got, ib = take(B, ib, n_tt_b)
        tt += got
        got, ia = take(A, ia, n_pr_a)
        pr += got
        got, ib = take(B, ib, n_pr_b)
        pr += got
    if not tt or not pr:
        raise DriftConfigError("linear-skew drift produced an empty split; dataset too small for batch size")
    tt = np.array(rng.permutation(tt), dtype=np.int64)
    n_tr = stochastic_round(len(tt) * config.p_tr / p_tt, rng)
    train, test = tt[:n_tr], tt[n_tr:]
    if len(train) == 0 or len(test) == 0:
        raise DriftConfigError("linear-skew drift produced an empty train or test split")
    return SplitTriple(np.sort(train), np.sort(test), np.sort(np.array(pr, dtype=np.int64)),
                       (config.p_tr, config.p_te, config.p_pr))


@dataclass(frozen=True)
class NearestNeighborsConfig:
    """Nearest-neighbors drift.

    With probability ``p_set`` the train/test pool is biased, otherwise prod.
    Within the biased pool an anchor is drawn and, with probability
    ``p_near``, its nearest ``floor(p_down * n)`` neighbours are removed
    (furthest otherwise); the other pool is downsampled at random by the
    same fraction.
    """

    p_tr: float
    p_te: float
    p_pr: float
    p_set: float = 0.5
    p_near: float = 0.5
    p_down: float = 0.5

    def validate(self):
        try:
            check_fractions(self.p_tr, self.p_te, self.p_pr)
        except ValueError as exc:
            raise DriftConfigError(str(exc)) from exc
        for name in ("p_set", "p_near", "p_down"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DriftConfigError(f"{name} must lie in [0, 1]")
        if self.p_down >= 1.0:
            raise DriftConfigError("p_down must be below 1")

    def to_dict(self):
        return {"kind": "nearest_neighbors", **asdict(self)}


@dataclass
class NearestNeighborsTrace:
    """Details of one nearest-neighbors draw, for inspection and tests."""

    biased: str
    mode: str
    anchor: int
    removed: np.ndarray
    kept: np.ndarray


def anchor_order(Z, pool, anchor):
    """Pool rows other than ``anchor`` sorted by distance to it (ties by row index)."""
    others = pool[pool != anchor]
    d = np.sqrt(((Z[others] - Z[anchor]) ** 2).sum(axis=1))
    order = np.lexsort((others, d))
    return others[order], d[order]


def nearest_neighbors_drift(dataset: Dataset, config: NearestNeighborsConfig, seed,
                            features=None, return_trace=False):
    config.validate()
    rng = np.random.default_rng(check_seed(seed))
    Z = distance_matrix_features(dataset) if features is None else np.asarray(features, float)
    n = dataset.n_rows
    perm = rng.permutation(n)
    p_tt = config.p_tr + config.p_te
    n_tt = stochastic_round(n * p_tt, rng)
    tt, pr = np.sort(perm[:n_tt]), np.sort(perm[n_tt:])
    if len(tt) < 2 or len(pr) < 1:
        raise DriftConfigError("dataset too small for nearest-neighbors drift")
    bias_tt = rng.random() < config.p_set
    near = rng.random() < config.p_near
    down, other = (tt, pr) if bias_tt else (pr, tt)
    anchor = int(down[rng.integers(len(down))])
    ordered, _ = anchor_order(Z, down, anchor)
    n_remove = math.floor(config.p_down * len(down))
    n_remove = min(n_remove, len(ordered))
    removed = ordered[:n_remove] if near else ordered[len(ordered) - n_remove:]
    down_kept = np.setdiff1d(down, removed)
    n_rand = math.floor(config.p_down * len(other))
    other_kept = np.sort(rng.permutation(other)[n_rand:])
    tt_new, pr_new = (down_kept, other_kept) if bias_tt else (other_kept, down_kept)
    tt_new = rng.permutation(tt_new)
    n_tr = stochastic_round(len(tt_new) * config.p_tr / p_tt, rng)
    train, test = np.sort(tt_new[:n_tr]), np.sort(tt_new[n_tr:])
    if len(train) == 0 or len(test) == 0 or len(pr_new) == 0:
        raise DriftConfigError("nearest-neighbors drift produced an empty split")
    split = SplitTriple(train, test, pr_new, (config.p_tr, config.p_te, config.p_pr))
    if return_trace:
        return split, NearestNeighborsTrace("tt" if bias_tt else "pr", "near" if near else "far",
                                            anchor, np.sort(removed), down_kept)
    return split


def simulate_drift(dataset: Dataset, config, seed) -> SplitTriple:
    if isinstance(config, LinearSkewConfig):
        return linear_skew(dataset, config, seed)
    if isinstance(config, NearestNeighborsConfig):
        return nearest_neighbors_drift(dataset, config, seed)
    raise DriftConfigError(f"unknown drift config {type(config).__name__}")


def drift_config_from_dict(d):
    d = dict(d)
    kind = d.pop("kind")
    if kind == "linear_skew":
        return LinearSkewConfig(**d)
    if kind == "nearest_neighbors":
        return NearestNeighborsConfig(**d)
    raise DriftConfigError(f"unknown drift kind {kind!r}")
