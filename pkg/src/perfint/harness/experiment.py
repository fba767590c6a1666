"""Leave-one-out evaluation of the UM against the model-free baselines, and feature ablation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..features import FEATURE_NAMES, SOURCES, TYPES, select_features
from ..learners.base import derive_seed
from ..uncertainty import build_um_pipeline, cost_terms, tl_calibrate, z_scale
from .config import ConfigError, ExperimentConfig
from .library import ScenarioLibrary

log = logging.getLogger(__name__)

METHODS = ("SE", "BS", "I", "SE_TL", "BS_TL", "I_TL", "C_TL", "UM")
RAW_WIDTH = {"SE": "se_width", "BS": "bs_width", "I": "intrinsic_width"}

# Ablation layout: rows are feature types, columns are sources; None marks an undefined cell.
ABLATION_ROWS = TYPES + ("All",)
ABLATION_COLS = ("Base", "PerfPred", "Proxy", "Drift", "All")
ABLATION_UNDEFINED = {
    ("Distance", "PerfPred"), ("Internal", "Proxy"), ("Internal", "Drift"),
    ("Prediction", "Base"), ("Prediction", "Drift"), ("Noise", "Proxy"), ("Noise", "Drift"),
}


@dataclass
class CostRow:
    method: str
    predictor: str
    alpha: float
    mean_cost: float | None
    ci_low: float | None
    ci_high: float | None
    n_scenarios: int


@dataclass
class ScenarioRow:
    id: str
    dataset: str
    predictor: str
    alpha: float
    method: str
    true_accuracy: float
    predicted_accuracy: float
    delta: float
    width: float
    cost: float

    @property
    def lower(self):
        return self.predicted_accuracy - self.width

    @property
    def upper(self):
        return self.predicted_accuracy + self.width


@dataclass
class ReportBundle:
    costs: list
    scenarios: list
    metadata: dict = field(default_factory=dict)
    ablation: dict | None = None

    def to_dict(self):
        return {
            "metadata": self.metadata,
            "costs": [c.__dict__ for c in self.costs],
            "scenarios": [s.__dict__ for s in self.scenarios],
            "ablation": self.ablation,
        }

    @classmethod
    def from_dict(cls, d):
        return cls([CostRow(**c) for c in d["costs"]], [ScenarioRow(**s) for s in d["scenarios"]],
                   d.get("metadata", {}), d.get("ablation"))

    def __eq__(self, other):
        return isinstance(other, ReportBundle) and self.to_dict() == other.to_dict()

    def cost(self, method, predictor, alpha):
        for c in self.costs:
            if c.method == method and c.predictor == predictor and c.alpha == alpha:
                return c.mean_cost
        raise KeyError((method, predictor, alpha))


def target_mean(values, groups) -> float:
    """Mean over groups of the per-group mean."""
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    return float(np.mean([values[groups == g].mean() for g in dict.fromkeys(groups.tolist())]))


def bootstrap_ci(values, groups, n_resamples, seed, level=0.95):
    """Percentile CI of ``target_mean`` resampling scenarios within each group."""
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    rng = np.random.default_rng(seed)
    parts = [values[groups == g] for g in dict.fromkeys(groups.tolist())]
    stats = np.zeros(n_resamples)
    for p in parts:
        stats += p[rng.integers(0, len(p), size=(n_resamples, len(p)))].mean(axis=1)
    stats /= len(parts)
    q = (1 - level) / 2
    lo, hi = np.quantile(stats, [q, 1 - q])
    return float(lo), float(hi)


def _targets(lib, config, kind):
    ev = lib.select(predictor_kind=kind, generator=config.eval_generator)
    return list(dict.fromkeys(r.dataset for r in ev))


def loo_widths(lib: ScenarioLibrary, config: ExperimentConfig, kind, alpha, target,
               methods=METHODS, feature_idx=None):
    """Widths per method for one held-out target dataset.

    Returns (eval records, {method: widths or None}, provenance).
    """
    train = lib.select(predictor_kind=kind, generator=config.train_generator, exclude_dataset=target)
    ev = lib.select(predictor_kind=kind, generator=config.eval_generator, dataset=target)
    if not ev:
        raise ConfigError(f"target dataset {target!r} has no evaluation scenarios")
    if not train:
        raise ConfigError(f"no training scenarios outside target {target!r}")
    d_train = np.array([r.delta for r in train])
    out = {}
    z = z_scale(alpha)
    for m in methods:
        base = m.split("_")[0]
        if m == "UM":
            continue
        if base == "C":
            s = tl_calibrate(np.ones(len(train)), d_train, alpha)
            out[m] = np.full(len(ev), s)
            continue
        attr = RAW_WIDTH[base]
        if getattr(ev[0], attr) is None:
            out[m] = None
            continue
        raw_ev = np.array([getattr(r, attr) for r in ev], dtype=float)
        if m.endswith("_TL"):
            raw_tr = np.array([getattr(r, attr) for r in train], dtype=float)
            out[m] = tl_calibrate(raw_tr, d_train, alpha) * raw_ev
        else:
            out[m] = z * raw_ev
    prov = {}
    if "UM" in methods:
        idx = list(range(len(FEATURE_NAMES))) if feature_idx is None else list(feature_idx)
        X_tr = np.array([r.features[idx] for r in train])
        X_ev = np.array([r.features[idx] for r in ev])
        seed = derive_seed(config.master_seed, "um", kind, alpha, target)
        um, scale = build_um_pipeline(
            X_tr, d_train, kind, alpha, seed, feature_names=[FEATURE_NAMES[i] for i in idx],
            scenario_ids=[r.id for r in train], um_params=config.um.params,
            n_members=config.um.n_members, min_scenarios=config.um.min_scenarios)
        out["UM"] = scale * um.predict(X_ev)
        prov = {"train_ids": um.provenance["train_ids"],
                "calibration_ids": um.provenance["calibration_ids"], "scale": scale}
    return ev, out, prov


def run_loo_experiment(lib: ScenarioLibrary, config: ExperimentConfig, methods=METHODS) -> ReportBundle:
    costs, rows = [], []
    provenance = {}
    for kind in config.predictor_kinds:
        targets = _targets(lib, config, kind)
        if len(targets) < 1:
            log.warning("no evaluation scenarios for predictor %s", kind)
            continue
        for alpha in config.alphas:
            per_method = {m: ([], []) for m in methods}
            for target in targets:
                ev, widths, prov = loo_widths(lib, config, kind, alpha, target, methods)
                provenance[f"{kind}/{alpha}/{target}"] = prov
                deltas = np.array([r.delta for r in ev])
                for m in methods:
                    w = widths.get(m)
                    if w is None:
                        continue
                    terms = cost_terms(deltas, w, alpha)
                    per_method[m][0].extend(terms.tolist())
                    per_method[m][1].extend([target] * len(ev))
                    for r, wi, ti in zip(ev, w, terms):
                        rows.append(ScenarioRow(r.id, r.dataset, kind, alpha, m, r.true_prod_accuracy,
                                                r.predicted_prod_accuracy, r.delta, float(wi), float(ti)))
            for m in methods:
                terms, groups = per_method[m]
                if not terms:
                    costs.append(CostRow(m, kind, alpha, None, None, None, 0))
                    continue
                lo, hi = bootstrap_ci(terms, groups, config.ci_resamples,
                                      derive_seed(config.master_seed, "ci", kind, alpha, m))
                costs.append(CostRow(m, kind, alpha, target_mean(terms, groups), lo, hi, len(terms)))
    meta = {"config_hash": config.hash(), "master_seed": config.master_seed,
            "methods": list(methods), "um_provenance": provenance,
            "predictor_average": predictor_average(costs)}
    return ReportBundle(costs, rows, meta)


def predictor_average(costs) -> list[dict]:
    """Per (method, alpha) mean of the per-predictor mean costs, skipping NA predictors."""
    acc = {}
    for c in costs:
        if c.mean_cost is not None:
            acc.setdefault((c.method, c.alpha), []).append(c.mean_cost)
    return [{"method": m, "alpha": a, "mean_cost": float(np.mean(v)), "n_predictors": len(v)}
            for (m, a), v in acc.items()]


def check_loo_hygiene(bundle: ReportBundle, lib: ScenarioLibrary) -> bool:
    """No UM ever trained or calibrated on a scenario from its own target dataset."""
    ds_of = {r.id: r.dataset for r in lib.records}
    for key, prov in bundle.metadata.get("um_provenance", {}).items():
        target = key.rsplit("/", 1)[1]
        for sid in prov.get("train_ids", []) + prov.get("calibration_ids", []):
            if ds_of[sid] == target:
                return False
    return True


# ---------------------------------------------------------------- ablation


def ablation_cells():
    """(row, col, feature indices) for every defined cell of the ablation grid.

    A defined cell may still select no features under this schema; it is
    reported with a null cost.
    """
    cells = []
    for row in ABLATION_ROWS:
        for col in ABLATION_COLS:
            if (row, col) in ABLATION_UNDEFINED:
                continue
            types = None if row == "All" else {row}
            sources = None if col == "All" else {col}
            cells.append((row, col, select_features(sources, types)))
    return cells


def ablation_cost(lib, config, kind, alpha, feature_idx) -> float:
    terms, groups = [], []
    for target in _targets(lib, config, kind):
        ev, widths, _ = loo_widths(lib, config, kind, alpha, target, ("UM",), feature_idx)
        deltas = np.array([r.delta for r in ev])
        terms.extend(cost_terms(deltas, widths["UM"], alpha).tolist())
        groups.extend([target] * len(ev))
    if not terms:
        raise ConfigError(f"no scenarios for predictor {kind!r}")
    return target_mean(terms, groups)


def run_ablation(lib: ScenarioLibrary, config: ExperimentConfig, predictor_kind="meta_model",
                 alpha=0.9, mask=None) -> dict:
    """UM cost per (type, source) feature subset, normalized by the all-features cost.

    ``mask`` optionally restricts the grid to a list of (row, col) cells.
    """
    if mask is not None:
        wanted = {tuple(m) for m in mask}
        unknown = wanted - {(r, c) for r, c, idx in ablation_cells() if idx}
        if unknown:
            raise ConfigError(f"empty or undefined ablation cells: {sorted(unknown)}")
    full = ablation_cost(lib, config, predictor_kind, alpha, None)
    grid = {}
    for row, col, idx in ablation_cells():
        if mask is not None and (row, col) not in wanted and (row, col) != ("All", "All"):
            continue
        if (row, col) == ("All", "All"):
            c = full
        elif not idx:
            grid.setdefault(row, {})[col] = {"cost": None, "normalized": None, "n_features": 0}
            continue
        else:
            c = ablation_cost(lib, config, predictor_kind, alpha, idx)
        grid.setdefault(row, {})[col] = {"cost": c, "normalized": c / full if full > 0 else None,
                                         "n_features": len(idx)}
    return {"predictor": predictor_kind, "alpha": alpha, "all_features_cost": full,
            "rows": list(ABLATION_ROWS), "cols": list(ABLATION_COLS), "grid": grid}


__all__ = [
    "METHODS", "ReportBundle", "CostRow", "ScenarioRow", "run_loo_experiment", "run_ablation",
    "ablation_cells", "check_loo_hygiene", "target_mean", "bootstrap_ci", "SOURCES",
]
