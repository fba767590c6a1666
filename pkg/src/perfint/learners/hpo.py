"""Random-search hyperparameter optimization and the search spaces it samples."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .base import Learner, check_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RandInt:
    """Uniform integer in ``[low, high]`` (inclusive)."""

    low: int
    high: int


def _lin(a, b, n):
    return [float(v) for v in np.linspace(a, b, n)]


GBM_SPACE = {
    "learning_rate": [0.1, 0.15, 0.2],
    "min_samples_split": _lin(0.005, 0.01, 5),
    "min_samples_leaf": _lin(0.0005, 0.001, 5),
    "max_leaf_nodes": [3, 5, 7, 9, 11],
    "max_features": ["log2", "sqrt"],
    "subsample": [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "n_estimators": [100, 150, 200, 250, 300, 350, 400],
}
LOGISTIC_SPACE = {
    "C": [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
    "penalty": ["l1", "l2"],
}
RF_SPACE = {
    "n_estimators": RandInt(5, 100),
    "max_depth": [2, 3, 4, 6, None],
    "min_samples_split": [2, 3, 4, 5, 6],
    "max_features": ["log2", "sqrt"],
}
DART_SPACE = {
    "max_depth": [2, 4, 6],
    "learning_rate": [0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
    "n_estimators": [50, 100, 150, 200],
    "reg_lambda": [float(v) for v in np.logspace(-1, 1, num=20)],
    "sample_type": ["uniform", "weighted"],
    "normalize_type": ["tree", "forest"],
}


def _check_space(space):
    if not space:
        raise ValueError("empty search space")
    for name, dom in space.items():
        if isinstance(dom, RandInt):
            if dom.low > dom.high:
                raise ValueError(f"{name}: invalid range [{dom.low}, {dom.high}]")
        elif not isinstance(dom, (list, tuple)) or len(dom) == 0:
            raise ValueError(f"{name}: domain must be a nonempty list or RandInt")


def sample_configs(space, n_iter, seed) -> list[dict]:
    _check_space(space)
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    rng = np.random.default_rng(check_seed(seed))
    out = []
    for _ in range(n_iter):
        cfg = {}
        for name in sorted(space):
            dom = space[name]
            if isinstance(dom, RandInt):
                cfg[name] = int(rng.integers(dom.low, dom.high + 1))
            else:
                v = dom[int(rng.integers(len(dom)))]
                cfg[name] = v.item() if isinstance(v, np.generic) else v
        out.append(cfg)
    return out


def fold_ids(y, folds, seed, stratified=True) -> np.ndarray:
    rng = np.random.default_rng(check_seed(seed))
    n = len(y)
    ids = np.empty(n, dtype=np.int64)
    if stratified:
        offset = 0
        for c in np.unique(y):
            members = rng.permutation(np.nonzero(y == c)[0])
            ids[members] = (np.arange(len(members)) + offset) % folds
            offset += len(members)
    else:
        ids[rng.permutation(n)] = np.arange(n) % folds
    return ids


def neg_log_loss(model, X, y) -> float:
    P = model.predict_proba(X)
    p = np.clip(P[np.arange(len(y)), y], 1e-15, 1.0)
    return float(np.mean(np.log(p)))


def neg_mse(model, X, y) -> float:
    return -float(np.mean((model.predict(X) - y) ** 2))


METRICS = {"neg_log_loss": neg_log_loss, "neg_mse": neg_mse}


def random_search_hpo(estimator: Learner, space, X, y, metric="neg_log_loss", n_iter=20,
                      folds=3, seed=0) -> dict:
    """Best configuration (highest cross-validated ``metric``) among ``n_iter`` samples.

    Ties go to the first configuration seen. With ``n_iter == 1`` the single
    sample is returned without evaluation.
    """
    configs = sample_configs(space, n_iter, seed)
    if n_iter == 1:
        return configs[0]
    score_fn = METRICS[metric] if isinstance(metric, str) else metric
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    ids = fold_ids(y, folds, seed, stratified=(metric == "neg_log_loss"))
    best, best_score = configs[0], -np.inf
    for cfg in configs:
        scores = []
        for k in range(folds):
            tr, va = ids != k, ids == k
            if not va.any() or not tr.any():
                continue
            try:
                model = estimator.clone(**cfg).fit(X[tr], y[tr])
            except ValueError as exc:
                log.debug("hpo fold skipped: %s", exc)
                continue
            scores.append(score_fn(model, X[va], y[va]))
        s = float(np.mean(scores)) if scores else -np.inf
        if s > best_score:
            best, best_score = cfg, s
    return best
