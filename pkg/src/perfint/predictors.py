"""Performance predictors: per-point confidence that the base model is correct.

A predictor's accuracy estimate for a pool of unlabeled rows is the mean of
its per-point confidences (reported in accuracy points, 0-100).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .learners import (
    DART_SPACE, GBM_SPACE, LOGISTIC_SPACE, RF_SPACE, GaussianKDE, GradientBoosting, IsotonicMap,
    KNNDistance, LogisticRegression, PCA, RandomForestClassifier, fit_isotonic,
    learner_from_dict, random_search_hpo,
)
from .learners.base import derive_seed
from .learners.linear import DegenerateLabelsError
from .learners.trees import TreeEnsemble
from .tabular import Preprocessor

log = logging.getLogger(__name__)

PREDICTOR_KINDS = ("confidence", "meta_model", "crossval", "dropout")
META_FEATURE_NAMES = (
    "base_top", "base_margin", "base_entropy", "class_frequency",
    "proxy_lr_top", "proxy_rf_top", "proxy_gbm_top",
    "proxy_lr_margin", "proxy_rf_margin", "proxy_gbm_margin",
    "outlier_score", "density_score",
)


# ------------------------------------------------------------------ helpers


def top_confidence(P) -> np.ndarray:
    return np.asarray(P).max(axis=1)


def top_margin(P) -> np.ndarray:
    """Highest minus second-highest class probability."""
    S = np.sort(np.asarray(P), axis=1)
    return S[:, -1] - S[:, -2]


def confidence_entropy(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(P > 0, -P * np.log(P), 0.0)
    return t.sum(axis=1)


class TabularModel:
    """A learner bound to a feature view ("tree" or "linear") of raw dataset rows."""

    def __init__(self, learner, view: str, preprocessor: Preprocessor):
        self.learner = learner
        self.view = view
        self.preprocessor = preprocessor

    def matrix(self, X_raw):
        return self.preprocessor.tree(X_raw) if self.view == "tree" else self.preprocessor.linear(X_raw)

    def predict_proba(self, X_raw):
        return self.learner.predict_proba(self.matrix(X_raw))

    def to_dict(self):
        return {"learner": self.learner.to_dict(), "view": self.view}

    @classmethod
    def from_dict(cls, d, preprocessor):
        return cls(learner_from_dict(d["learner"]), d["view"], preprocessor)


class MetaFeatureTransformer:
    """Maps raw rows to the 12 meta-features used by the model-based predictors.

    Outlier score: mean distance to the ``k`` nearest training rows in the
    standardized feature space. Density score: highest per-class Gaussian KDE
    log-likelihood in a PCA reduction of the same space.
    """

    def __init__(self, base: TabularModel, proxies: list[TabularModel], preprocessor: Preprocessor,
                 k=10, bandwidth=0.2, n_components=6):
        self.base = base
        self.proxies = proxies
        self.preprocessor = preprocessor
        self.k = k
        self.bandwidth = bandwidth
        self.n_components = n_components

    def fit(self, X_train, y_train, X_test, n_classes):
        Z = self.preprocessor.linear(X_train)
        self.knn_ = KNNDistance(self.k).fit(Z)
        self.pca_ = PCA(min(self.n_components, Z.shape[1])).fit(Z)
        R = self.pca_.transform(Z)
        y_train = np.asarray(y_train)
        self.kdes_ = {int(c): GaussianKDE(self.bandwidth).fit(R[y_train == c])
                      for c in np.unique(y_train)}
        pred = self.base.predict_proba(X_test).argmax(axis=1)
        self.class_freq_ = np.bincount(pred, minlength=n_classes) / max(len(pred), 1)
        return self

    def transform(self, X_raw, base_proba=None) -> np.ndarray:
        if not hasattr(self, "knn_"):
            raise RuntimeError("MetaFeatureTransformer is not fitted")
        P = self.base.predict_proba(X_raw) if base_proba is None else base_proba
        cols = [top_confidence(P), top_margin(P), confidence_entropy(P),
                self.class_freq_[P.argmax(axis=1)]]
        proxy_P = [m.predict_proba(X_raw) for m in self.proxies]
        cols += [top_confidence(Q) for Q in proxy_P]
        cols += [top_margin(Q) for Q in proxy_P]
        Z = self.preprocessor.linear(X_raw)
        cols.append(self.knn_.score(Z))
        R = self.pca_.transform(Z)
        dens = np.column_stack([kde.score(R) for kde in self.kdes_.values()])
        cols.append(dens.max(axis=1))
        return np.column_stack(cols)

    def to_dict(self):
        return {
            "base": self.base.to_dict(), "proxies": [p.to_dict() for p in self.proxies],
            "k": self.k, "bandwidth": self.bandwidth, "n_components": self.n_components,
            "knn_points": self.knn_.points_.tolist(), "pca": self.pca_.to_dict(),
            "kde": {str(c): kde.points_.tolist() for c, kde in self.kdes_.items()},
            "class_freq": self.class_freq_.tolist(),
        }

    @classmethod
    def from_dict(cls, d, preprocessor):
        t = cls(TabularModel.from_dict(d["base"], preprocessor),
                [TabularModel.from_dict(p, preprocessor) for p in d["proxies"]],
                preprocessor, d["k"], d["bandwidth"], d["n_components"])
        t.knn_ = KNNDistance(t.k).fit(np.array(d["knn_points"], float))
        t.pca_ = PCA.from_dict(d["pca"])
        t.kdes_ = {int(c): GaussianKDE(t.bandwidth).fit(np.array(v, float).reshape(len(v), -1))
                   for c, v in d["kde"].items()}
        t.class_freq_ = np.array(d["class_freq"], float)
        return t


def calibration_targets(correct) -> np.ndarray:
    """Isotonic targets: 1/(n_- + 2) for misclassified rows, (n_+ + 1)/(n_+ + 2) otherwise."""
    correct = np.asarray(correct, dtype=bool)
    n_pos = int(correct.sum())
    n_neg = len(correct) - n_pos
    return np.where(correct, (n_pos + 1) / (n_pos + 2), 1.0 / (n_neg + 2))


def calibrate_confidences(raw, correct) -> IsotonicMap:
    raw = np.asarray(raw, dtype=float)
    if len(raw) < 2:
        return IsotonicMap.identity()
    return fit_isotonic(raw, calibration_targets(correct))


def stratified_holdout(labels, fraction, seed):
    """Split indices into (fit, holdout) with ~``fraction`` of each class held out."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    hold = []
    for c in np.unique(labels):
        members = rng.permutation(np.nonzero(labels == c)[0])
        hold.extend(members[:int(round(fraction * len(members)))].tolist())
    hold = np.sort(np.array(hold, dtype=np.int64))
    fit = np.setdiff1d(np.arange(len(labels)), hold)
    return fit, hold


# ------------------------------------------------------------- predictions


@dataclass
class PerformancePrediction:
    per_point_confidences: np.ndarray
    raw_confidences: np.ndarray
    intrinsic_width: float | None = None
    member_confidences: np.ndarray | None = None  # (n_members, n_rows), pre-calibration

    def __post_init__(self):
        c = np.asarray(self.per_point_confidences, dtype=float)
        if len(c) and (c.min() < 0 or c.max() > 1):
            raise ValueError("confidences must lie in [0, 1]")
        self.per_point_confidences = c

    @property
    def predicted_accuracy(self) -> float:
        return 100.0 * float(np.mean(self.per_point_confidences))

    @property
    def raw_accuracy(self) -> float:
        return 100.0 * float(np.mean(self.raw_confidences))


@dataclass
class PredictorSettings:
    hpo_iter: int = 20
    hpo_folds: int = 3
    calibration_fraction: float = 0.2
    crossval_members: int = 10
    dropout_rate: float = 0.25
    dropout_draws: int = 10
    early_stopping_rounds: int = 10


class PerformancePredictor:
    kind = "base"

    def predict(self, base_proba, meta_features=None, seed=0) -> PerformancePrediction:
        raise NotImplementedError

    def tree_ensembles(self) -> list[TreeEnsemble]:
        """Tree ensembles inside the predictor (for white-box features)."""
        return []


class ConfidencePredictor(PerformancePredictor):
    """Recalibrates the base model's top confidence by 0.1-wide histogram bins."""

    kind = "confidence"
    edges = np.round(np.linspace(0.0, 1.0, 11), 10)

    def fit(self, base_proba_test, correct_test):
        conf = top_confidence(base_proba_test)
        correct = np.asarray(correct_test, dtype=float)
        if len(conf) == 0:
            raise ValueError("confidence predictor needs a nonempty test split")
        b = self._bin(conf)
        nb = len(self.edges) - 1
        self.counts_ = np.bincount(b, minlength=nb)
        hits = np.bincount(b, weights=correct, minlength=nb)
        self.acc_ = np.divide(hits, self.counts_, out=np.zeros(nb), where=self.counts_ > 0)
        nonempty = np.nonzero(self.counts_ > 0)[0]
        # Empty bins borrow the nearest nonempty bin (lower bin on ties).
        self.lookup_ = np.array([nonempty[np.argmin(np.abs(nonempty - k))] for k in range(nb)])
        return self

    def _bin(self, conf):
        b = np.searchsorted(self.edges, conf, side="right") - 1
        return np.clip(b, 0, len(self.edges) - 2)

    def bin_uncertainty(self) -> np.ndarray:
        """Bernoulli standard error sqrt(a_k (1 - a_k) / n_k) per effective bin."""
        k = self.lookup_
        a, n = self.acc_[k], self.counts_[k]
        return np.sqrt(a * (1 - a) / n)

    def predict(self, base_proba, meta_features=None, seed=0):
        conf = top_confidence(base_proba)
        eff = self.lookup_[self._bin(conf)]
        u = np.sqrt(self.acc_[eff] * (1 - self.acc_[eff]) / self.counts_[eff])
        return PerformancePrediction(self.acc_[eff], conf, 100.0 * float(u.mean()))

    def to_dict(self):
        return {"kind": self.kind, "counts": self.counts_.tolist(), "acc": self.acc_.tolist(),
                "lookup": self.lookup_.tolist()}

    @classmethod
    def from_dict(cls, d):
        p = cls()
        p.counts_ = np.array(d["counts"], np.int64)
        p.acc_ = np.array(d["acc"], float)
        p.lookup_ = np.array(d["lookup"], np.int64)
        return p


def confidence_intrinsic_uncertainty(predictor: ConfidencePredictor, base_proba_prod) -> float:
    return predictor.predict(base_proba_prod).intrinsic_width


class MetaModelPredictor(PerformancePredictor):
    """Model-based predictor on the 12 meta-features, in three variants.

    ``meta_model``: GBM + logistic regression ensemble. ``crossval``: random
    forests, one per cross-validation fold. ``dropout``: a regression GBT with
    tree dropout, sampled repeatedly at inference. Ensemble confidences are
    calibrated by isotonic regression on a held-out slice of the test split.
    """

    def __init__(self, kind="meta_model", settings: PredictorSettings | None = None, seed=0):
        if kind not in ("meta_model", "crossval", "dropout"):
            raise ValueError(f"unknown meta-model variant {kind!r}")
        self.kind = kind
        self.settings = settings or PredictorSettings()
        self.seed = seed

    # -- training

    def fit(self, meta_test, correct_test):
        s = self.settings
        M = np.asarray(meta_test, dtype=float)
        c = np.asarray(correct_test, dtype=bool)
        self.constant_ = None
        self.members_ = []
        self.scaler_ = None
        if c.all() or not c.any():
            self.constant_ = float(calibration_targets(c)[0]) if len(c) else 0.5
            log.info("degenerate meta labels (%d/%d correct); constant confidence %.4f",
                        int(c.sum()), len(c), self.constant_)
            self.calibration_ = IsotonicMap.identity()
            return self
        fit_idx, cal_idx = stratified_holdout(c, s.calibration_fraction, derive_seed(self.seed, "cal"))
        Mf, cf = M[fit_idx], c[fit_idx].astype(np.int64)
        try:
            self._fit_members(Mf, cf)
        except DegenerateLabelsError:
            self.constant_ = float(np.mean(calibration_targets(c)))
            self.members_ = []
            self.calibration_ = IsotonicMap.identity()
            log.warning("meta-learner fit split is single-class; constant confidence")
            return self
        raw = self.member_confidences(M[cal_idx]).mean(axis=0)
        self.calibration_ = calibrate_confidences(raw, c[cal_idx])
        return self

    def _fit_members(self, M, c):
        s = self.settings
        if np.unique(c).size < 2:
            raise DegenerateLabelsError("single-class meta labels")
        seed = self.seed
        if self.kind == "meta_model":
            gbm = GradientBoosting(loss="logloss", max_depth=None, n_classes=2,
                                   seed=derive_seed(seed, "gbm"))
            gbm.set_params(**random_search_hpo(gbm, GBM_SPACE, M, c, "neg_log_loss", s.hpo_iter,
                                               s.hpo_folds, derive_seed(seed, "hpo-gbm")))
            self.scaler_ = _Scaler.fit(M)
            Ms = self.scaler_(M)
            lr = LogisticRegression(n_classes=2, seed=derive_seed(seed, "lr"))
            lr.set_params(**random_search_hpo(lr, LOGISTIC_SPACE, Ms, c, "neg_log_loss", s.hpo_iter,
                                              s.hpo_folds, derive_seed(seed, "hpo-lr")))
            self.members_ = [gbm.fit(M, c), lr.fit(Ms, c)]
        elif self.kind == "crossval":
            rf = RandomForestClassifier(n_classes=2, seed=derive_seed(seed, "rf"))
            rf.set_params(**random_search_hpo(rf, RF_SPACE, M, c, "neg_log_loss", s.hpo_iter,
                                              s.hpo_folds, derive_seed(seed, "hpo-rf")))
            from .learners.hpo import fold_ids
            folds = fold_ids(c, s.crossval_members, derive_seed(seed, "folds"))
            members = []
            for k in range(s.crossval_members):
                keep = folds != k
                members.append(rf.clone(seed=derive_seed(seed, "member", k)).fit(M[keep], c[keep]))
            self.members_ = members
        else:
            gb = GradientBoosting(loss="squared", dropout=s.dropout_rate, max_depth=3,
                                  early_stopping_rounds=s.early_stopping_rounds,
                                  validation_fraction=0.2, seed=derive_seed(seed, "dart"))
            gb.set_params(**random_search_hpo(gb, DART_SPACE, M, c.astype(float), "neg_mse",
                                              s.hpo_iter, s.hpo_folds, derive_seed(seed, "hpo-dart")))
            self.members_ = [gb.fit(M, c.astype(float))]

    # -- inference

    def member_confidences(self, M, seed=0) -> np.ndarray:
        """Uncalibrated member confidences, shape (n_members, n_rows)."""
        M = np.asarray(M, dtype=float)
        if self.constant_ is not None:
            return np.full((1, len(M)), self.constant_)
        if self.kind == "meta_model":
            gbm, lr = self.members_
            return np.vstack([gbm.predict_proba(M)[:, 1], lr.predict_proba(self.scaler_(M))[:, 1]])
        if self.kind == "crossval":
            return np.vstack([m.predict_proba(M)[:, 1] for m in self.members_])
        return np.clip(self.members_[0].predict(M), 0.0, 1.0)[None, :]

    def dropout_draws(self, M, seed=0) -> np.ndarray:
        gb = self.members_[0]
        n = self.settings.dropout_draws
        return np.vstack([np.clip(gb.predict_stochastic(M, seed=derive_seed(seed, "draw", i)), 0, 1)
                          for i in range(n)])

    def predict(self, base_proba=None, meta_features=None, seed=0):
        M = np.asarray(meta_features, dtype=float)
        members = self.member_confidences(M)
        raw = members.mean(axis=0)
        conf = np.clip(self.calibration_(raw), 0.0, 1.0)
        intrinsic = None
        ens = members
        if self.kind == "crossval":
            intrinsic = 100.0 * float(members.std(axis=0).mean()) if self.constant_ is None else 0.0
        elif self.kind == "dropout":
            if self.constant_ is None:
                ens = self.dropout_draws(M, seed)
                intrinsic = 100.0 * float(ens.std(axis=0).mean())
            else:
                intrinsic = 0.0
        return PerformancePrediction(conf, raw, intrinsic, ens)

    def tree_ensembles(self):
        if self.constant_ is not None:
            return []
        if self.kind == "meta_model":
            return [self.members_[0].trees_]
        if self.kind == "crossval":
            return [m.trees_ for m in self.members_]
        return [self.members_[0].trees_]

    # -- persistence

    def to_dict(self):
        return {
            "kind": self.kind, "seed": self.seed, "settings": self.settings.__dict__,
            "constant": self.constant_, "members": [m.to_dict() for m in self.members_],
            "scaler": None if self.scaler_ is None else self.scaler_.to_dict(),
            "calibration": self.calibration_.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        p = cls(d["kind"], PredictorSettings(**d["settings"]), d["seed"])
        p.constant_ = d["constant"]
        p.members_ = [learner_from_dict(m) for m in d["members"]]
        p.scaler_ = None if d["scaler"] is None else _Scaler.from_dict(d["scaler"])
        p.calibration_ = IsotonicMap.from_dict(d["calibration"])
        return p


@dataclass
class _Scaler:
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scale: np.ndarray = field(default_factory=lambda: np.ones(0))

    @classmethod
    def fit(cls, X):
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 1e-12, sd, 1.0))

    def __call__(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], float), np.array(d["scale"], float))


def train_predictor(kind, base_proba_test, correct_test, meta_test=None,
                    settings: PredictorSettings | None = None, seed=0) -> PerformancePredictor:
    if kind == "confidence":
        return ConfidencePredictor().fit(base_proba_test, correct_test)
    if kind in ("meta_model", "crossval", "dropout"):
        return MetaModelPredictor(kind, settings, seed).fit(meta_test, correct_test)
    raise ValueError(f"unknown predictor kind {kind!r}")


def predictor_from_dict(d) -> PerformancePredictor:
    if d["kind"] == "confidence":
        return ConfidencePredictor.from_dict(d)
    return MetaModelPredictor.from_dict(d)


def intrinsic_uncertainty(prediction: PerformancePrediction) -> float | None:
    """Intrinsic raw width in accuracy points; ``None`` for the meta_model predictor."""
    return prediction.intrinsic_width


def ensemble_whitebox(members) -> tuple[float, float]:
    """(stdev of member means, mean of per-point member stdevs), in accuracy points."""
    if members is None or len(members) < 2:
        return 0.0, 0.0
    members = np.asarray(members, dtype=float)
    return 100.0 * float(members.mean(axis=1).std()), 100.0 * float(members.std(axis=0).mean())


def bernoulli_se(a, n) -> float:
    return math.sqrt(a * (1 - a) / n)
