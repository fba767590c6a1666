"""Random forests and gradient-boosted trees on a shared histogram grower."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .base import Learner, NotFittedError, check_seed, derive_seeds

MAX_BINS = 256


class Binner:
    """Per-feature thresholds; ``code = #(thresholds < x)``."""

    def __init__(self, max_bins: int = MAX_BINS):
        self.max_bins = max_bins

    def fit(self, X) -> "Binner":
        X = np.asarray(X, dtype=float)
        thr = []
        for j in range(X.shape[1]):
            col = X[:, j]
            u = np.unique(col[~np.isnan(col)])
            if len(u) <= self.max_bins:
                t = (u[:-1] + u[1:]) / 2
            else:
                q = np.quantile(col, np.linspace(0, 1, self.max_bins + 1)[1:-1], method="lower")
                t = np.unique(q)
            thr.append(t)
        self.thresholds = thr
        self.n_bins = np.array([len(t) + 1 for t in thr], dtype=np.int64)
        table = np.zeros((X.shape[1], max(1, int(self.n_bins.max()) - 1 if len(thr) else 1)))
        for j, t in enumerate(thr):
            table[j, :len(t)] = t
        self.table = table
        return self

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        codes = np.empty(X.shape, dtype=np.uint8)
        for j, t in enumerate(self.thresholds):
            codes[:, j] = np.searchsorted(t, X[:, j], side="left")
        return codes

    def threshold(self, f: int, b: int) -> float:
        return float(self.thresholds[f][b])


@dataclass
class TreeEnsemble:
    """Trees packed into flat node arrays; child indices are global."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    depth: np.ndarray
    roots: np.ndarray

    @classmethod
    def empty(cls, n_outputs: int) -> "TreeEnsemble":
        return cls(
            np.empty(0, np.int32), np.empty(0), np.empty(0, np.int32), np.empty(0, np.int32),
            np.empty((0, n_outputs)), np.empty(0), np.empty(0, np.int32), np.empty(0, np.int64),
        )

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "depth": self.depth.tolist(),
            "roots": self.roots.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "TreeEnsemble":
        m = len(d["value"][0]) if d["value"] else 1
        return cls(
            np.array(d["feature"], np.int32),
            np.array(d["threshold"], float),
            np.array(d["left"], np.int32),
            np.array(d["right"], np.int32),
            np.array(d["value"], float).reshape(-1, m),
            np.array(d["n_samples"], float),
            np.array(d["depth"], np.int32),
            np.array(d["roots"], np.int64),
        )

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return K.apply_packed(X, self.feature, self.threshold, self.left, self.right, self.roots)

    def path_stats(self, X, n_levels=3):
        X = np.ascontiguousarray(X, dtype=float)
        return K.path_stats(X, self.feature, self.threshold, self.left, self.right,
                            self.roots, n_levels)


class _TreeBuffer:
    """Accumulates grown trees and packs them once."""

    def __init__(self):
        self.parts = []
        self.n_nodes = 0

    def add(self, grown, binner: Binner, value=None):
        feat, sbin, left, right, val, wsum, _count, depth = grown[:8]
        off = self.n_nodes
        split = feat >= 0
        thr = np.zeros(len(feat))
        thr[split] = binner.table[feat[split], sbin[split]]
        gl = np.where(left >= 0, left + off, -1).astype(np.int32)
        gr = np.where(right >= 0, right + off, -1).astype(np.int32)
        self.parts.append((feat, thr, gl, gr, val if value is None else value, wsum, depth))
        self.n_nodes += len(feat)
        return off

    def pack(self, n_outputs) -> TreeEnsemble:
        if not self.parts:
            return TreeEnsemble.empty(n_outputs)
        roots, off = [], 0
        for p in self.parts:
            roots.append(off)
            off += len(p[0])
        cat = [np.concatenate([p[i] for p in self.parts]) for i in range(7)]
        return TreeEnsemble(
            cat[0].astype(np.int32), cat[1], cat[2], cat[3], cat[4].reshape(off, n_outputs),
            cat[5].astype(float), cat[6].astype(np.int32), np.array(roots, np.int64),
        )


def resolve_max_features(mf, d: int) -> int:
    if mf is None:
        return d
    if mf == "sqrt":
        return max(1, int(math.sqrt(d)))
    if mf == "log2":
        return max(1, int(math.log2(d))) if d > 1 else 1
    if isinstance(mf, float):
        return max(1, int(mf * d))
    return max(1, min(int(mf), d))


def _resolve_count(v, n: int, minimum: int) -> int:
    if isinstance(v, float) and v < 1.0:
        return max(minimum, int(math.ceil(v * n)))
    return max(minimum, int(v))


def _grow(codes, binner, Y, w, rows, max_depth, max_leaf_nodes, mss, msl, mf, seed):
    return K.grow_tree(
        codes, binner.n_bins, np.ascontiguousarray(Y, dtype=float), np.ascontiguousarray(w, dtype=float),
        np.ascontiguousarray(rows, dtype=np.int64),
        -1 if max_depth is None else int(max_depth),
        -1 if max_leaf_nodes is None else int(max_leaf_nodes),
        int(mss), int(msl), int(mf), int(seed),
    )


# ----------------------------------------------------------------- forests


class RandomForestClassifier(Learner):
    """Bagged CART trees with Gini splitting; probabilities average leaf frequencies."""

    kind = "random_forest"

    def __init__(self, n_estimators=100, max_depth=None, min_samples_split=2,
                 min_samples_leaf=1, max_features="sqrt", bootstrap=True,
                 class_weight=None, n_classes=None, seed=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.class_weight = class_weight
        self.n_classes = n_classes
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] == 0:
            raise ValueError("cannot fit on empty data")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        n, d = X.shape
        k = self.n_classes or int(y.max()) + 1
        k = max(k, 2)
        binner = Binner().fit(X)
        codes = binner.transform(X)
        w = np.ones(n)
        if self.class_weight == "balanced":
            cnt = np.bincount(y, minlength=k).astype(float)
            cw = np.where(cnt > 0, n / (np.count_nonzero(cnt) * np.maximum(cnt, 1)), 0.0)
            w = cw[y]
        Y = np.zeros((n, k))
        Y[np.arange(n), y] = w
        mss = _resolve_count(self.min_samples_split, n, 2)
        msl = _resolve_count(self.min_samples_leaf, n, 1)
        mf = resolve_max_features(self.max_features, d)
        buf = _TreeBuffer()
        imp = np.zeros(d)
        for ts in derive_seeds(check_seed(self.seed), self.n_estimators):
            if self.bootstrap:
                rows = np.random.default_rng(ts).integers(0, n, n)
            else:
                rows = np.arange(n)
            grown = _grow(codes, binner, Y, w, rows, self.max_depth, None, mss, msl, mf, ts % (2**31))
            val = grown[4]
            tot = val.sum(axis=1, keepdims=True)
            buf.add(grown, binner, np.divide(val, tot, out=np.full_like(val, 1.0 / k), where=tot > 0))
            feat, gain = grown[0], grown[8]
            ti = np.bincount(feat[feat >= 0], weights=gain[feat >= 0], minlength=d)
            if ti.sum() > 0:
                imp += ti / ti.sum()
        self.trees_ = buf.pack(k)
        self.n_classes_ = k
        self.n_features_ = d
        self.feature_importances_ = imp / imp.sum() if imp.sum() > 0 else np.full(d, 1.0 / d)
        return self

    def predict_proba(self, X):
        self._check_fitted("trees_")
        leaves = self.trees_.apply(X)
        return self.trees_.value[leaves].mean(axis=1)

    def member_proba(self, X) -> np.ndarray:
        """Per-tree probabilities, shape (n_trees, n_rows, n_classes)."""
        self._check_fitted("trees_")
        return np.moveaxis(self.trees_.value[self.trees_.apply(X)], 1, 0)

    def get_params(self):
        return {
            "n_estimators": self.n_estimators, "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split, "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features, "bootstrap": self.bootstrap,
            "class_weight": self.class_weight, "n_classes": self.n_classes, "seed": self.seed,
        }

    def _state(self):
        return {
            "trees": self.trees_.to_dict(), "n_classes": self.n_classes_,
            "n_features": self.n_features_, "importances": self.feature_importances_.tolist(),
        }

    def _load_state(self, s):
        self.trees_ = TreeEnsemble.from_dict(s["trees"])
        self.n_classes_ = s["n_classes"]
        self.n_features_ = s["n_features"]
        self.feature_importances_ = np.array(s["importances"])


# ---------------------------------------------------------------- boosting

LOSSES = ("logloss", "squared", "quantile")


def _lower_quantile(v, tau):
    v = np.sort(np.asarray(v, dtype=float))
    return float(v[max(int(math.ceil(tau * len(v))) - 1, 0)])


class GradientBoosting(Learner):
    """Stagewise regression trees fitted to loss gradients.

    ``loss`` is ``"logloss"`` (classification, one tree per class per stage
    when there are more than two classes), ``"squared"`` or ``"quantile"``
    (pinball loss at ``tau``). A positive ``dropout`` rate enables DART-style
    training: each stage drops every earlier tree with that probability,
    fits the new tree against the reduced ensemble and renormalizes tree
    weights (``normalize_type`` "tree" or "forest").
    """

    kind = "gbt"

    def __init__(self, loss="squared", tau=0.5, learning_rate=0.1, n_estimators=100,
                 max_depth=3, max_leaf_nodes=None, min_samples_split=2, min_samples_leaf=1,
                 max_features=None, subsample=1.0, reg_lambda=0.0, dropout=0.0,
                 sample_type="uniform", normalize_type="tree", early_stopping_rounds=None,
                 validation_fraction=0.2, n_classes=None, seed=0):
        self.loss = loss
        self.tau = tau
        self.learning_rate = learning_rate
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.max_leaf_nodes = max_leaf_nodes
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.subsample = subsample
        self.reg_lambda = reg_lambda
        self.dropout = dropout
        self.sample_type = sample_type
        self.normalize_type = normalize_type
        self.early_stopping_rounds = early_stopping_rounds
        self.validation_fraction = validation_fraction
        self.n_classes = n_classes
        self.seed = seed

    def get_params(self):
        return {k: getattr(self, k) for k in (
            "loss", "tau", "learning_rate", "n_estimators", "max_depth", "max_leaf_nodes",
            "min_samples_split", "min_samples_leaf", "max_features", "subsample", "reg_lambda",
            "dropout", "sample_type", "normalize_type", "early_stopping_rounds",
            "validation_fraction", "n_classes", "seed")}

    # -- fitting

    def _validate(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.loss == "quantile" and not 0.0 < self.tau < 1.0:
            raise ValueError("quantile loss needs 0 < tau < 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")

    def fit(self, X, y):
        self._validate()
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            raise ValueError("cannot fit on empty data")
        rng = np.random.default_rng(check_seed(self.seed))
        if self.loss == "logloss":
            y = np.asarray(y, dtype=np.int64)
            k = max(self.n_classes or int(y.max()) + 1, 2)
            self.n_classes_ = k
            if np.unique(y).size < 2:
                raise ValueError("logloss boosting needs at least two classes")
        else:
            y = np.asarray(y, dtype=float)
            self.n_classes_ = None
        val_rows = None
        if self.early_stopping_rounds:
            perm = rng.permutation(len(y))
            nv = max(1, int(round(self.validation_fraction * len(y))))
            if len(y) - nv >= 2:
                val_rows, fit_rows = np.sort(perm[:nv]), np.sort(perm[nv:])
                Xv, yv = X[val_rows], y[val_rows]
                X, y = X[fit_rows], y[fit_rows]
        self.n_features_ = X.shape[1]
        self.init_ = self._init_score(y)
        if self.dropout > 0:
            self._fit_dart(X, y, rng, (Xv, yv) if val_rows is not None else None)
        else:
            self._fit_plain(X, y, rng, (Xv, yv) if val_rows is not None else None)
        return self

    def _n_out(self):
        return self.n_classes_ if self.loss == "logloss" and self.n_classes_ > 2 else 1

    def _init_score(self, y):
        if self.loss == "squared":
            return np.array([y.mean()])
        if self.loss == "quantile":
            return np.array([_lower_quantile(y, self.tau)])
        p = np.bincount(y, minlength=self.n_classes_) / len(y)
        p = np.clip(p, 1e-12, 1)
        if self.n_classes_ == 2:
            return np.array([math.log(p[1] / p[0])])
        return np.log(p)

    def _targets(self, y, F):
        """Negative gradients, one column per output."""
        if self.loss == "squared":
            return (y - F[:, 0])[:, None]
        if self.loss == "quantile":
            return np.where(y > F[:, 0], self.tau, self.tau - 1.0)[:, None]
        if self.n_classes_ == 2:
            return (y - _sigmoid(F[:, 0]))[:, None]
        P = _softmax(F)
        Yk = np.zeros_like(P)
        Yk[np.arange(len(y)), y] = 1.0
        return Yk - P

    def _leaf_values(self, grown, y, F, r, col):
        feat, idx, start, end = grown[0], grown[9], grown[10], grown[11]
        leaves = np.nonzero(feat < 0)[0]
        vals = np.zeros(len(feat))
        lam = float(self.reg_lambda)
        if self.loss == "quantile":
            diff = y - F[:, 0]
            vals[leaves] = K.leaf_lower_quantile(diff, idx, start, end, leaves, float(self.tau))
            return vals
        cnt = (end[leaves] - start[leaves]).astype(float)
        sums = grown[4][leaves, 0] * cnt
        if self.loss == "squared":
            vals[leaves] = sums / (cnt + lam)
            return vals
        order = leaves[np.argsort(start[leaves])]
        label = np.repeat(order, (end - start)[order])
        if self.n_classes_ == 2:
            p = _sigmoid(F[:, 0])
            h = p * (1 - p)
            scale = 1.0
        else:
            a = np.abs(r[:, col])
            h = a * (1 - a)
            scale = (self.n_classes_ - 1) / self.n_classes_
        hs = np.bincount(label, weights=h[idx], minlength=len(feat))[leaves]
        vals[leaves] = scale * sums / np.maximum(hs + lam, 1e-12)
        return vals

    def _stage_params(self, n, d):
        return (
            _resolve_count(self.min_samples_split, n, 2),
            _resolve_count(self.min_samples_leaf, n, 1),
            resolve_max_features(self.max_features, d),
        )

    def _fit_plain(self, X, y, rng, val):
        n, d = X.shape
        binner = Binner().fit(X)
        codes = binner.transform(X)
        mss, msl, mf = self._stage_params(n, d)
        n_out = self._n_out()
        F = np.tile(self.init_, (n, 1)) if n_out > 1 else np.full((n, 1), self.init_[0])
        ones = np.ones(n)
        buf = _TreeBuffer()
        cols = []
        lr = float(self.learning_rate)
        if val is not None:
            Fv = np.tile(self.init_, (len(val[1]), 1)) if n_out > 1 else np.full((len(val[1]), 1), self.init_[0])
            best, best_stage, stall = np.inf, 0, 0
        for stage in range(self.n_estimators):
            r = self._targets(y, F)
            if self.subsample < 1.0:
                m = max(1, int(self.subsample * n))
                rows = np.sort(rng.permutation(n)[:m])
            else:
                rows = np.arange(n)
            for col in range(n_out):
                grown = _grow(codes, binner, r[:, col:col + 1], ones, rows, self.max_depth,
                              self.max_leaf_nodes, mss, msl, mf, int(rng.integers(2**31)))
                vals = self._leaf_values(grown, y, F, r, col) * lr
                buf.add(grown, binner, vals[:, None])
                cols.append(col)
                F[:, col] += vals[K.apply_codes(codes, grown[0], grown[1], grown[2], grown[3])]
                if val is not None:
                    last = _single_tree(buf)
                    Fv[:, col] += last.value[last.apply(val[0])[:, 0], 0]
            if val is not None:
                score = self._val_loss(val[1], Fv)
                if score < best - 1e-12:
                    best, best_stage, stall = score, stage + 1, 0
                else:
                    stall += 1
                    if stall >= self.early_stopping_rounds:
                        break
        n_trees = len(cols)
        if val is not None:
            n_trees = best_stage * n_out
        self._finish(buf, cols, np.ones(len(cols)), n_trees)

    def _val_loss(self, yv, Fv):
        if self.loss == "squared":
            return float(np.sqrt(np.mean((yv - Fv[:, 0]) ** 2)))
        if self.loss == "quantile":
            d = yv - Fv[:, 0]
            return float(np.mean(np.maximum(self.tau * d, (self.tau - 1) * d)))
        P = _sigmoid(Fv[:, 0]) if self.n_classes_ == 2 else None
        if P is not None:
            p = np.clip(np.where(yv == 1, P, 1 - P), 1e-15, 1)
        else:
            p = np.clip(_softmax(Fv)[np.arange(len(yv)), yv], 1e-15, 1)
        return float(-np.mean(np.log(p)))

    def _fit_dart(self, X, y, rng, val):
        n, d = X.shape
        if self._n_out() != 1:
            raise ValueError("dropout boosting supports single-output losses only")
        binner = Binner().fit(X)
        codes = binner.transform(X)
        mss, msl, mf = self._stage_params(n, d)
        ones = np.ones(n)
        lr = float(self.learning_rate)
        buf = _TreeBuffer()
        contrib = []  # per-tree raw outputs on the training rows
        weights: list[float] = []
        vcontrib = []
        base = np.full(n, self.init_[0])
        if val is not None:
            best, best_stage, stall, best_w = np.inf, 0, 0, []
        for stage in range(self.n_estimators):
            T = len(weights)
            dropped = np.zeros(T, dtype=bool)
            if T:
                wv = np.array(weights)
                if self.sample_type == "weighted":
                    prob = np.minimum(1.0, self.dropout * T * wv / wv.sum())
                else:
                    prob = np.full(T, self.dropout)
                dropped = rng.random(T) < prob
            kept = ~dropped
            F = base.copy()
            for t in np.nonzero(kept)[0]:
                F += weights[t] * contrib[t]
            r = self._targets(y, F[:, None])
            if self.subsample < 1.0:
                rows = np.sort(rng.permutation(n)[:max(1, int(self.subsample * n))])
            else:
                rows = np.arange(n)
            grown = _grow(codes, binner, r, ones, rows, self.max_depth, self.max_leaf_nodes,
                          mss, msl, mf, int(rng.integers(2**31)))
            vals = self._leaf_values(grown, y, F[:, None], r, 0) * lr
            buf.add(grown, binner, vals[:, None])
            contrib.append(vals[K.apply_codes(codes, grown[0], grown[1], grown[2], grown[3])])
            k = int(dropped.sum())
            if k == 0:
                weights.append(1.0)
            elif self.normalize_type == "forest":
                factor = 1.0 / (1.0 + lr)
                for t in np.nonzero(dropped)[0]:
                    weights[t] *= factor
                weights.append(factor)
            else:
                for t in np.nonzero(dropped)[0]:
                    weights[t] *= k / (k + lr)
                weights.append(1.0 / (k + lr))
            if val is not None:
                last = _single_tree(buf)
                vcontrib.append(last.value[last.apply(val[0])[:, 0], 0])
                Fv = self.init_[0] + np.array(weights) @ np.array(vcontrib)
                score = self._val_loss(val[1], Fv[:, None])
                if score < best - 1e-12:
                    best, best_stage, stall, best_w = score, stage + 1, 0, list(weights)
                else:
                    stall += 1
                    if stall >= self.early_stopping_rounds:
                        break
        if val is not None:
            self._finish(buf, [0] * len(weights), np.array(best_w), best_stage)
        else:
            self._finish(buf, [0] * len(weights), np.array(weights), len(weights))

    def _finish(self, buf, cols, weights, n_trees):
        ens = buf.pack(1)
        if n_trees < ens.n_trees:
            cut = ens.roots[n_trees] if n_trees > 0 else 0
            ens = TreeEnsemble(
                ens.feature[:cut], ens.threshold[:cut], ens.left[:cut], ens.right[:cut],
                ens.value[:cut], ens.n_samples[:cut], ens.depth[:cut], ens.roots[:n_trees],
            )
        self.trees_ = ens
        self.tree_col_ = np.array(cols[:n_trees], dtype=np.int64)
        self.tree_weight_ = np.asarray(weights[:n_trees], dtype=float)

    # -- prediction

    def tree_outputs(self, X) -> np.ndarray:
        """Raw per-tree contributions (before tree weights), shape (n_rows, n_trees)."""
        self._check_fitted("trees_")
        X = np.asarray(X, dtype=float)
        if self.trees_.n_trees == 0:
            return np.zeros((len(X), 0))
        return self.trees_.value[self.trees_.apply(X), 0]

    def decision_function(self, X, tree_weights=None) -> np.ndarray:
        out = self.tree_outputs(X)
        w = self.tree_weight_ if tree_weights is None else tree_weights
        n_out = self._n_out()
        F = np.tile(self.init_, (len(out), 1)).astype(float)
        if n_out == 1:
            F = F[:, :1]
        contrib = out * w
        for c in range(n_out):
            F[:, c] += contrib[:, self.tree_col_ == c].sum(axis=1)
        return F

    def predict(self, X):
        F = self.decision_function(X)
        if self.loss == "logloss":
            return self.predict_proba(X).argmax(axis=1)
        return F[:, 0]

    def predict_proba(self, X):
        if self.loss != "logloss":
            raise TypeError("predict_proba requires logloss")
        F = self.decision_function(X)
        if self.n_classes_ == 2:
            p = _sigmoid(F[:, 0])
            return np.column_stack([1 - p, p])
        return _softmax(F)

    def predict_stochastic(self, X, rate=None, seed=0) -> np.ndarray:
        """One dropout draw: each tree kept with prob ``1 - rate``, kept trees rescaled."""
        rate = self.dropout if rate is None else rate
        rng = np.random.default_rng(check_seed(seed))
        keep = rng.random(self.trees_.n_trees) >= rate
        w = np.where(keep, self.tree_weight_ / (1.0 - rate), 0.0)
        F = self.decision_function(X, tree_weights=w)
        if self.loss == "logloss":
            return _sigmoid(F[:, 0]) if self.n_classes_ == 2 else _softmax(F)
        return F[:, 0]

    # -- persistence

    def _state(self):
        return {
            "trees": self.trees_.to_dict(), "init": self.init_.tolist(),
            "tree_col": self.tree_col_.tolist(), "tree_weight": self.tree_weight_.tolist(),
            "n_classes": self.n_classes_, "n_features": self.n_features_,
        }

    def _load_state(self, s):
        self.trees_ = TreeEnsemble.from_dict(s["trees"])
        self.init_ = np.array(s["init"], float)
        self.tree_col_ = np.array(s["tree_col"], np.int64)
        self.tree_weight_ = np.array(s["tree_weight"], float)
        self.n_classes_ = s["n_classes"]
        self.n_features_ = s["n_features"]


def _single_tree(buf: _TreeBuffer) -> TreeEnsemble:
    feat, thr, gl, gr, val, wsum, depth = buf.parts[-1]
    off = buf.n_nodes - len(feat)
    return TreeEnsemble(
        feat.astype(np.int32), thr, np.where(gl >= 0, gl - off, -1).astype(np.int32),
        np.where(gr >= 0, gr - off, -1).astype(np.int32), val.reshape(len(feat), -1), wsum,
        depth.astype(np.int32), np.array([0], np.int64),
    )


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(F):
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def node_frequencies(ensemble: TreeEnsemble, X) -> np.ndarray:
    """Per-node visit frequency (visits / rows) over all trees."""
    _, _, visits = ensemble.path_stats(X, 1)
    return visits / max(len(X), 1)


__all__ = [
    "Binner", "TreeEnsemble", "RandomForestClassifier", "GradientBoosting",
    "NotFittedError", "node_frequencies",
]
