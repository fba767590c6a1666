"""Scenario-level features for the uncertainty model (76 values, fixed order)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .learners import PCA, RandomForestClassifier
from .learners.base import derive_seed
from .predictors import confidence_entropy, ensemble_whitebox, stratified_holdout, top_confidence, top_margin
from .tabular import bootstrap_interval_width, build_histogram

SCHEMA_VERSION = "perfint-um-features/1"

SOURCES = ("Base", "PerfPred", "Proxy", "Drift", "Other")
TYPES = ("Distance", "Internal", "Prediction", "Noise")
PROXY_NAMES = ("lr", "rf", "gbm")
DRIFT_NAMES = ("raw", "transformed", "concat")

# Bin edges
TOP_CONF_EDGES = np.round(np.concatenate([np.arange(0, 0.9, 0.1), np.arange(0.9, 1.0001, 0.01)]), 10)
MARGIN_EDGES = np.round(np.linspace(0.0, 1.0, 11), 10)
ENTROPY_EDGES = np.round(np.concatenate([np.arange(0, 0.1, 0.01), np.arange(0.1, 3.0001, 0.1)]), 10)
DRIFT_EDGES = np.linspace(0.0, 1.0, 12)


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    source: str
    type: str


def _schema():
    out = []

    def dist(source, stem):
        out.extend(FeatureSpec(f"{stem}.D{m}", source, "Distance") for m in (1, 2, 3))

    for stem in ("top_conf", "margin", "entropy", "class_freq"):
        dist("Base", f"base.{stem}")
    out.append(FeatureSpec("base.entropy_ratio", "Base", "Prediction"))
    out.append(FeatureSpec("base.bootstrap", "Base", "Noise"))

    for stem in ("predicted_change", "pred_stdev", "pred_entropy"):
        out.append(FeatureSpec(f"pp.{stem}", "PerfPred", "Prediction"))
    out.append(FeatureSpec("pp.intrinsic", "PerfPred", "Internal"))
    out.append(FeatureSpec("pp.bootstrap", "PerfPred", "Noise"))
    for stem in ("ens_stdev_of_means", "ens_mean_of_stdevs", "cal_signed", "cal_abs"):
        out.append(FeatureSpec(f"pp.{stem}", "PerfPred", "Internal"))
    for stem in GBM_WHITEBOX_NAMES:
        out.append(FeatureSpec(f"pp.gbm.{stem}", "PerfPred", "Internal"))

    for stem in ("top_conf", "margin"):
        for p in PROXY_NAMES:
            dist("Proxy", f"proxy.{p}.{stem}")
    dist("Proxy", "proxy.best_feature")
    out.append(FeatureSpec("proxy.n_important", "Proxy", "Internal"))

    for d in DRIFT_NAMES:
        out.append(FeatureSpec(f"drift.{d}.accuracy", "Drift", "Prediction"))
    for d in DRIFT_NAMES:
        dist("Drift", f"drift.{d}.margin")

    dist("Other", "other.pca")
    return tuple(out)


GBM_WHITEBOX_NAMES = (
    ["dist_l1", "dist_l2", "dist_l3", "dist_sum", "nf_max", "nf_mean", "nf_std"]
    + [f"nf_d{d}_{s}" for d in (1, 2, 3) for s in ("max", "mean", "std")]
)
FEATURE_SCHEMA = _schema()
FEATURE_NAMES = tuple(f.name for f in FEATURE_SCHEMA)
N_FEATURES = len(FEATURE_SCHEMA)


def schema_document() -> dict:
    return {"version": SCHEMA_VERSION,
            "features": [{"name": f.name, "source": f.source, "type": f.type} for f in FEATURE_SCHEMA]}


def select_features(sources=None, types=None) -> list[int]:
    """Column indices whose source and type fall in the given sets (None means any)."""
    return [i for i, f in enumerate(FEATURE_SCHEMA)
            if (sources is None or f.source in sources) and (types is None or f.type in types)]


# -------------------------------------------------------------- distances


def mass_distances(p, q) -> tuple[float, float, float]:
    """(D1, D2, D3) between normalized histograms ``p`` (test) and ``q`` (prod)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d1 = float(np.max(np.abs(np.cumsum(p) - np.cumsum(q)))) if len(p) else 0.0
    pos = np.maximum(p - q, 0.0)
    return d1, float(pos.sum()), float((pos**2).sum())


def histogram_distances(test_values, prod_values, binning, clip=True) -> tuple[float, float, float]:
    test_values = np.asarray(test_values, dtype=float)
    prod_values = np.asarray(prod_values, dtype=float)
    if len(test_values) == 0 or len(prod_values) == 0:
        raise ValueError("histogram distance needs nonempty test and prod samples")
    if binning is None:
        return 0.0, 0.0, 0.0
    ht = build_histogram(test_values, binning, clip)
    hp = build_histogram(prod_values, binning, clip)
    if ht.total == 0 and hp.total == 0:
        return 0.0, 0.0, 0.0
    if ht.total == 0 or hp.total == 0:
        # every in-range value is on one side: disjoint supports
        return 1.0, 1.0, 1.0
    return mass_distances(ht.normalized, hp.normalized)


def histogram_distance(test_values, prod_values, binning, metric="D1", clip=True) -> float:
    i = {"D1": 0, "D2": 1, "D3": 2}[metric]
    return histogram_distances(test_values, prod_values, binning, clip)[i]


def quantile_edges(test_values, prod_values, n_bins=10, lo=0.1, hi=0.9):
    """Equal-width edges over the [lo, hi] quantile range of the pooled values (None if degenerate)."""
    v = np.concatenate([np.asarray(test_values, float), np.asarray(prod_values, float)])
    a, b = np.quantile(v, [lo, hi])
    if not b > a:
        return None
    return np.linspace(a, b, n_bins + 1)


def _quantile_distances(test_values, prod_values):
    return histogram_distances(test_values, prod_values,
                               quantile_edges(test_values, prod_values), clip=False)


def histogram_entropy(values, edges) -> float:
    p = build_histogram(values, edges).normalized
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


# ------------------------------------------------------------ drift models


@dataclass
class DriftModelSet:
    """Test-vs-prod random-forest discriminators on three input representations."""

    models: list
    accuracies: np.ndarray
    holdout_rows: np.ndarray      # positions into the stacked [test; prod] matrix
    holdout_labels: np.ndarray    # 0 = test, 1 = prod
    holdout_margins: np.ndarray   # (3, n_holdout) top-2nd confidence of each model


def train_drift_models(test_raw, prod_raw, transformer=None, seed=0, n_trees=100,
                       test_meta=None, prod_meta=None, holdout_fraction=0.25) -> DriftModelSet:
    """Fit three balanced RF discriminators (raw, meta-features, both) and score a 25% holdout.

    ``test_raw``/``prod_raw`` are tree-view feature matrices. Meta-features are
    computed by ``transformer`` from the raw rows unless passed in directly.
    """
    test_raw = np.asarray(test_raw, dtype=float)
    prod_raw = np.asarray(prod_raw, dtype=float)
    if len(prod_raw) < 8:
        raise ValueError("drift models need at least 8 prod rows")
    if len(test_raw) == 0:
        raise ValueError("drift models need a nonempty test split")
    if test_meta is None or prod_meta is None:
        if transformer is None:
            raise ValueError("drift models need a meta-feature transformer or precomputed meta-features")
        test_meta, prod_meta = transformer.transform(test_raw), transformer.transform(prod_raw)
    raw = np.vstack([test_raw, prod_raw])
    meta = np.vstack([test_meta, prod_meta])
    views = [raw, meta, np.hstack([raw, meta])]
    labels = np.r_[np.zeros(len(test_raw), np.int64), np.ones(len(prod_raw), np.int64)]
    fit_rows, hold_rows = _drift_holdout(raw, labels, holdout_fraction, derive_seed(seed, "holdout"))
    models, acc, margins = [], [], []
    for name, V in zip(DRIFT_NAMES, views):
        rf = RandomForestClassifier(n_estimators=n_trees, class_weight="balanced", n_classes=2,
                                    seed=derive_seed(seed, "drift", name))
        rf.fit(V[fit_rows], labels[fit_rows])
        P = rf.predict_proba(V[hold_rows])
        acc.append(float(np.mean(P.argmax(axis=1) == labels[hold_rows])))
        margins.append(top_margin(P))
        models.append(rf)
    return DriftModelSet(models, np.array(acc), hold_rows, labels[hold_rows], np.vstack(margins))


def _drift_holdout(raw, labels, fraction, seed):
    """Stratified holdout, except that identical rows never straddle fit and holdout.

    A test row with an exact copy in prod would otherwise be "recognized" through
    its twin carrying the opposite label, pushing accuracy below chance.
    """
    _, group = np.unique(raw, axis=0, return_inverse=True)
    group = group.ravel()
    if group.max() + 1 == len(labels):
        return stratified_holdout(labels, fraction, seed)
    rng = np.random.default_rng(seed)
    sizes = np.bincount(group)
    target = int(round(fraction * len(labels)))
    taken, n = [], 0
    for g in rng.permutation(len(sizes)):
        if n >= target:
            break
        taken.append(g)
        n += sizes[g]
    in_hold = np.isin(group, taken)
    return np.nonzero(~in_hold)[0], np.nonzero(in_hold)[0]


# -------------------------------------------------------------- whitebox


def gbm_whitebox(ensembles, meta_test, meta_prod, n_levels=3) -> np.ndarray:
    """Decision-distance and node-frequency statistics over the predictor's trees (16 values)."""
    out = np.zeros(len(GBM_WHITEBOX_NAMES))
    ensembles = [e for e in ensembles if e.n_trees > 0]
    if not ensembles or len(meta_test) == 0 or len(meta_prod) == 0:
        return out
    dsum = np.zeros(n_levels)
    dcnt = np.zeros(n_levels)
    deltas, depths = [], []
    for ens in ensembles:
        s, c, visits_prod = ens.path_stats(meta_prod, n_levels)
        _, _, visits_test = ens.path_stats(meta_test, n_levels)
        dsum += s
        dcnt += c
        deltas.append(np.abs(visits_test / len(meta_test) - visits_prod / len(meta_prod)))
        depths.append(ens.depth)
    levels = np.divide(dsum, dcnt, out=np.zeros(n_levels), where=dcnt > 0)
    out[:n_levels] = levels
    out[n_levels] = levels.sum()
    delta = np.concatenate(deltas)
    depth = np.concatenate(depths)
    out[4:7] = _stats(delta)
    for j, d in enumerate((1, 2, 3)):
        out[7 + 3 * j:10 + 3 * j] = _stats(delta[depth == d])
    return out


def _stats(v):
    if len(v) == 0:
        return 0.0, 0.0, 0.0
    return float(v.max()), float(v.mean()), float(v.std())


def n_important_features(importances, share=0.9) -> int:
    imp = np.sort(np.asarray(importances, dtype=float))[::-1]
    if imp.sum() <= 0:
        return len(imp)
    c = np.cumsum(imp) / imp.sum()
    return int(np.searchsorted(c, share - 1e-12) + 1)


# -------------------------------------------------------------- extraction


@dataclass
class UmFeatureVector:
    values: np.ndarray
    predictor_kind: str
    schema_version: str = SCHEMA_VERSION

    @property
    def names(self):
        return FEATURE_NAMES

    def as_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, self.values.tolist()))


def shared_features(ctx, drift: DriftModelSet | None = None) -> dict:
    """Base, Proxy, Drift and Other features (independent of the predictor kind)."""
    if drift is None:
        drift = train_drift_models(ctx.preprocessor.tree(ctx.rows("test")),
                                   ctx.preprocessor.tree(ctx.rows("prod")), seed=derive_seed(ctx.seed, "drift"),
                                   n_trees=ctx.settings.drift_rf_trees,
                                   test_meta=ctx.meta_test, prod_meta=ctx.meta_prod)
    f = {}
    Pt, Pp = ctx.base_proba_test, ctx.base_proba_prod
    _put(f, "base.top_conf", histogram_distances(top_confidence(Pt), top_confidence(Pp), TOP_CONF_EDGES))
    _put(f, "base.margin", histogram_distances(top_margin(Pt), top_margin(Pp), MARGIN_EDGES))
    et, ep = confidence_entropy(Pt), confidence_entropy(Pp)
    _put(f, "base.entropy", histogram_distances(et, ep, ENTROPY_EDGES))
    _put(f, "base.class_freq", histogram_distances(Pt.argmax(1), Pp.argmax(1), Pt.shape[1]))
    f["base.entropy_ratio"] = float(ep.mean() / max(et.mean(), 1e-6))
    f["base.bootstrap"] = 100.0 * bootstrap_interval_width(
        top_confidence(Pp), ctx.settings.bootstrap_resamples, 0.95, derive_seed(ctx.seed, "boot-base"))

    X_test, X_prod = ctx.rows("test"), ctx.rows("prod")
    proxy_P = [(m.predict_proba(X_test), m.predict_proba(X_prod)) for m in ctx.proxies]
    for p, (Qt, Qp) in zip(PROXY_NAMES, proxy_P):
        _put(f, f"proxy.{p}.top_conf", histogram_distances(top_confidence(Qt), top_confidence(Qp), TOP_CONF_EDGES))
    for p, (Qt, Qp) in zip(PROXY_NAMES, proxy_P):
        _put(f, f"proxy.{p}.margin", histogram_distances(top_margin(Qt), top_margin(Qp), MARGIN_EDGES))
    importances = ctx.proxies[1].learner.feature_importances_
    best = int(np.argmax(importances))
    Tt, Tp = ctx.preprocessor.tree(X_test), ctx.preprocessor.tree(X_prod)
    _put(f, "proxy.best_feature", _quantile_distances(Tt[:, best], Tp[:, best]))
    f["proxy.n_important"] = float(n_important_features(importances))

    lab = drift.holdout_labels
    for i, d in enumerate(DRIFT_NAMES):
        f[f"drift.{d}.accuracy"] = float(drift.accuracies[i])
    for i, d in enumerate(DRIFT_NAMES):
        m = drift.holdout_margins[i]
        if (lab == 0).any() and (lab == 1).any():
            _put(f, f"drift.{d}.margin", histogram_distances(m[lab == 0], m[lab == 1], DRIFT_EDGES))
        else:
            _put(f, f"drift.{d}.margin", (0.0, 0.0, 0.0))

    Zt = ctx.preprocessor.linear(ctx.rows("train"))
    try:
        pca = PCA(1).fit(Zt)
        _put(f, "other.pca", _quantile_distances(pca.transform(ctx.preprocessor.linear(X_test))[:, 0],
                                                 pca.transform(ctx.preprocessor.linear(X_prod))[:, 0]))
    except ValueError:
        _put(f, "other.pca", (0.0, 0.0, 0.0))
    return f


def predictor_features(scenario) -> dict:
    """PerfPred-group features for one scenario."""
    ctx = scenario.context
    pred = scenario.prediction
    conf = pred.per_point_confidences
    f = {
        "pp.predicted_change": scenario.predicted_prod_accuracy - ctx.base_test_accuracy,
        "pp.pred_stdev": 100.0 * float(conf.std()),
        "pp.pred_entropy": histogram_entropy(conf, MARGIN_EDGES),
        "pp.intrinsic": float(pred.intrinsic_width or 0.0),
        "pp.bootstrap": 100.0 * bootstrap_interval_width(
            conf, ctx.settings.bootstrap_resamples, 0.95, derive_seed(ctx.seed, "boot-pp", scenario.predictor_kind)),
    }
    f["pp.ens_stdev_of_means"], f["pp.ens_mean_of_stdevs"] = ensemble_whitebox(pred.member_confidences)
    signed = pred.predicted_accuracy - pred.raw_accuracy
    f["pp.cal_signed"], f["pp.cal_abs"] = signed, abs(signed)
    wb = gbm_whitebox(scenario.predictor.tree_ensembles(), ctx.meta_test, ctx.meta_prod)
    for name, v in zip(GBM_WHITEBOX_NAMES, wb):
        f[f"pp.gbm.{name}"] = float(v)
    return f


def extract_features(scenario, drift: DriftModelSet | None = None, shared: dict | None = None) -> UmFeatureVector:
    if scenario.context is None:
        raise ValueError("scenario has no fitted context (base model, proxies, transformer)")
    if shared is None:
        shared = shared_features(scenario.context, drift)
    f = {**shared, **predictor_features(scenario)}
    missing = [n for n in FEATURE_NAMES if n not in f]
    if missing:
        raise ValueError(f"missing features: {missing}")
    values = np.array([f[n] for n in FEATURE_NAMES], dtype=float)
    if not np.all(np.isfinite(values)):
        bad = [n for n, v in zip(FEATURE_NAMES, values) if not math.isfinite(v)]
        raise ValueError(f"non-finite features: {bad}")
    return UmFeatureVector(values, scenario.predictor_kind)


def _put(f, stem, d3):
    for m, v in zip((1, 2, 3), d3):
        f[f"{stem}.D{m}"] = float(v)


def write_schema(path):
    with open(path, "w") as fh:
        json.dump(schema_document(), fh, indent=2)
