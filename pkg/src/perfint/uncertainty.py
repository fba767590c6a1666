"""Uncertainty model (quantile GBT ensemble), interval calibration and the interval cost."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .features import FEATURE_NAMES, SCHEMA_VERSION
from .learners import GradientBoosting, learner_from_dict
from .learners.base import derive_seed

log = logging.getLogger(__name__)

UM_PARAMS = {
    "learning_rate": 0.1, "n_estimators": 200, "max_features": "log2", "subsample": 0.8,
    "max_leaf_nodes": 7, "max_depth": None,
}
MIN_TRAINING_SCENARIOS = 50


# ------------------------------------------------------------------- cost


def cost_terms(deltas, widths, alpha) -> np.ndarray:
    """Per-scenario interval cost: alpha for each point of miss, 1 - alpha for each point of excess."""
    d = np.asarray(deltas, dtype=float)
    u = np.asarray(widths, dtype=float)
    if d.shape != u.shape:
        raise ValueError(f"deltas and widths differ in shape: {d.shape} vs {u.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * np.maximum(d - u, 0.0) + (1.0 - alpha) * np.maximum(u - d, 0.0)


def cost(deltas, widths, alpha) -> float:
    """Total interval cost over all scenarios."""
    return float(cost_terms(deltas, widths, alpha).sum())


def mean_cost(deltas, widths, alpha) -> float:
    t = cost_terms(deltas, widths, alpha)
    return float(t.mean()) if len(t) else float("nan")


@dataclass
class CostReport:
    alpha: float
    method: str
    deltas: np.ndarray
    widths: np.ndarray

    @property
    def terms(self):
        return cost_terms(self.deltas, self.widths, self.alpha)

    @property
    def total(self) -> float:
        return float(self.terms.sum())

    @property
    def mean(self) -> float:
        return float(self.terms.mean())


# ------------------------------------------------------------ calibration


def z_scale(alpha) -> float:
    """Two-sided standard-normal quantile for coverage ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    return NormalDist().inv_cdf((1.0 + alpha) / 2.0)


def z_calibrate(widths, alpha) -> np.ndarray:
    return np.asarray(widths, dtype=float) * z_scale(alpha)


def tl_calibrate(widths, deltas, alpha, chunk=2048) -> float:
    """Scale s >= 0 minimizing ``cost(deltas, s * widths, alpha)``, ties to the smallest s.

    The cost is piecewise linear in s with breakpoints at delta_i / u_i, so
    the minimum is attained on {0} and those breakpoints.
    """
    u = np.asarray(widths, dtype=float)
    d = np.asarray(deltas, dtype=float)
    if u.shape != d.shape:
        raise ValueError("widths and deltas differ in shape")
    if len(u) == 0:
        raise ValueError("TL calibration needs at least one scenario")
    if np.any(u < 0):
        raise ValueError("widths must be nonnegative")
    pos = u > 0
    if not pos.any():
        log.warning("all raw widths are zero; TL scale set to 0")
        return 0.0
    if len(u) < 10:
        log.debug("TL calibration on only %d scenarios", len(u))
    cands = np.unique(np.concatenate([[0.0], d[pos] / u[pos]]))
    costs = np.empty(len(cands))
    for i in range(0, len(cands), chunk):
        s = cands[i:i + chunk, None]
        su = s * u[None, :]
        costs[i:i + chunk] = (alpha * np.maximum(d - su, 0.0) + (1 - alpha) * np.maximum(su - d, 0.0)).sum(1)
    best = costs.min()
    tol = 1e-12 * max(1.0, abs(best))
    return float(cands[np.nonzero(costs <= best + tol)[0][0]])


@dataclass
class PredictionInterval:
    raw_width: float
    calibrated_width: float
    method: str = "none"
    scale: float = 1.0

    def __post_init__(self):
        if self.raw_width < 0 or self.calibrated_width < 0:
            raise ValueError("interval widths must be nonnegative")


def calibrate_interval(raw_width, method, alpha=None, scale=None) -> PredictionInterval:
    if method == "target_z":
        scale = z_scale(alpha)
    elif method == "tl_constant":
        if scale is None:
            raise ValueError("tl_constant calibration needs a fitted scale")
    elif method == "none":
        scale = 1.0
    else:
        raise ValueError(f"unknown calibration method {method!r}")
    return PredictionInterval(raw_width, scale * raw_width, method, scale)


# -------------------------------------------------------- uncertainty model


@dataclass
class UncertaintyModel:
    members: list
    alpha: float
    predictor_kind: str
    feature_names: tuple
    schema_version: str = SCHEMA_VERSION
    provenance: dict = field(default_factory=dict)

    def member_predictions(self, X) -> np.ndarray:
        X = self._matrix(X)
        return np.vstack([m.predict(X) for m in self.members])

    def predict(self, X) -> np.ndarray:
        """Raw widths: mean of member outputs, floored at 0."""
        return np.maximum(self.member_predictions(X).mean(axis=0), 0.0)

    def _matrix(self, X):
        if isinstance(X, dict):
            missing = [n for n in self.feature_names if n not in X]
            extra = [n for n in X if n not in self.feature_names]
            if missing or extra:
                raise ValueError(f"feature mismatch: missing {missing}, extra {extra}")
            return np.array([[X[n] for n in self.feature_names]], dtype=float)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        return X

    def to_dict(self):
        return {
            "format": "perfint-um", "schema_version": self.schema_version, "alpha": self.alpha,
            "predictor_kind": self.predictor_kind, "feature_names": list(self.feature_names),
            "provenance": self.provenance, "members": [m.to_dict() for m in self.members],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([learner_from_dict(m) for m in d["members"]], d["alpha"], d["predictor_kind"],
                   tuple(d["feature_names"]), d["schema_version"], d.get("provenance", {}))


def train_um(X, deltas, alpha, seed=0, predictor_kind="meta_model", feature_names=None,
             n_members=10, params=None, min_scenarios=MIN_TRAINING_SCENARIOS,
             provenance=None) -> UncertaintyModel:
    """Ten quantile GBTs (tau = alpha) on scenario features; each member seeded independently."""
    X = np.asarray(X, dtype=float)
    d = np.asarray(deltas, dtype=float)
    if len(X) != len(d):
        raise ValueError("feature rows and deltas differ in length")
    if len(d) < min_scenarios:
        raise ValueError(f"uncertainty model needs at least {min_scenarios} scenarios, got {len(d)}")
    if np.any(d < 0):
        raise ValueError("deltas must be nonnegative")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    names = tuple(feature_names) if feature_names is not None else FEATURE_NAMES
    if X.shape[1] != len(names):
        raise ValueError("feature matrix width does not match feature names")
    p = {**UM_PARAMS, **(params or {})}
    members = [
        GradientBoosting(loss="quantile", tau=alpha, seed=derive_seed(seed, "um", i), **p).fit(X, d)
        for i in range(n_members)
    ]
    return UncertaintyModel(members, float(alpha), predictor_kind, names, SCHEMA_VERSION,
                            dict(provenance or {}))


def predict_interval(um: UncertaintyModel, features) -> PredictionInterval:
    """Raw interval for one feature vector (dict by name, or a row in schema order)."""
    if hasattr(features, "values") and hasattr(features, "predictor_kind"):
        features = dict(zip(FEATURE_NAMES, features.values))
        features = {n: features[n] for n in um.feature_names}
    w = float(um.predict(features)[0])
    return PredictionInterval(w, w, "none", 1.0)


def split_80_20(n, seed):
    """Scenario-level 80/20 split (sorted positions)."""
    perm = np.random.default_rng(derive_seed(seed, "um-split")).permutation(n)
    n_cal = max(1, int(round(0.2 * n)))
    return np.sort(perm[n_cal:]), np.sort(perm[:n_cal])


def build_um_pipeline(X, deltas, predictor_kind, alpha, split_seed, seed=None, feature_names=None,
                      scenario_ids=None, um_params=None, n_members=10,
                      min_scenarios=MIN_TRAINING_SCENARIOS):
    """Train the UM on 80% of the scenarios and TL-calibrate its widths on the other 20%."""
    X = np.asarray(X, dtype=float)
    d = np.asarray(deltas, dtype=float)
    if len(d) < 2:
        raise ValueError("pipeline needs at least two scenarios")
    tr, cal = split_80_20(len(d), split_seed)
    if len(tr) == 0 or len(cal) == 0:
        raise ValueError("empty UM train or calibration split")
    ids = list(scenario_ids) if scenario_ids is not None else [str(i) for i in range(len(d))]
    um = train_um(X[tr], d[tr], alpha, split_seed if seed is None else seed, predictor_kind,
                  feature_names, n_members, um_params, min_scenarios,
                  provenance={"train_ids": [ids[i] for i in tr], "calibration_ids": [ids[i] for i in cal]})
    scale = tl_calibrate(um.predict(X[cal]), d[cal], alpha)
    return um, scale
