"""Drift scenarios: splits plus base model, proxies, meta-feature transform and predictor."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .learners import (
    GBM_SPACE, RF_SPACE, GradientBoosting, LogisticRegression, RandomForestClassifier,
    random_search_hpo,
)
from .learners.base import derive_seed
from .predictors import (
    MetaFeatureTransformer, PerformancePrediction, PredictorSettings, TabularModel,
    predictor_from_dict, train_predictor,
)
from .tabular import Dataset, Preprocessor, SplitTriple

log = logging.getLogger(__name__)

BASE_KINDS = ("random_forest", "logistic")


class ScenarioError(RuntimeError):
    """A scenario could not be built; the harness logs and skips it."""


@dataclass
class ModelSettings:
    """Sizes and search budgets for every model fitted inside a scenario."""

    base_rf_trees: int = 100
    proxy_hpo_iter: int = 15
    hpo_folds: int = 3
    drift_rf_trees: int = 100
    bootstrap_resamples: int = 500
    predictor: PredictorSettings = field(default_factory=PredictorSettings)

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        pred = PredictorSettings(**d.pop("predictor", {}))
        return cls(predictor=pred, **d)

    def to_dict(self):
        return asdict(self)


def fit_base_model(kind, dataset: Dataset, rows, pre: Preprocessor, seed,
                   n_trees=100) -> TabularModel:
    X, y = dataset.subset(rows)
    k = dataset.n_classes
    if kind == "random_forest":
        learner = RandomForestClassifier(n_estimators=n_trees, n_classes=k, seed=seed)
        return TabularModel(learner.fit(pre.tree(X), y), "tree", pre)
    if kind == "logistic":
        learner = LogisticRegression(n_classes=k, seed=seed)
        return TabularModel(learner.fit(pre.linear(X), y), "linear", pre)
    raise ScenarioError(f"unknown base model kind {kind!r}")


def train_proxy_models(dataset: Dataset, train_rows, pre: Preprocessor, seed,
                       settings: ModelSettings | None = None) -> list[TabularModel]:
    """Logistic, random-forest and GBM proxies on the base task (trees tuned by random search)."""
    s = settings or ModelSettings()
    X, y = dataset.subset(train_rows)
    k = dataset.n_classes
    Xt, Xl = pre.tree(X), pre.linear(X)
    lr = LogisticRegression(n_classes=k, seed=derive_seed(seed, "proxy-lr")).fit(Xl, y)
    rf = RandomForestClassifier(n_classes=k, seed=derive_seed(seed, "proxy-rf"))
    rf.set_params(**random_search_hpo(rf, RF_SPACE, Xt, y, "neg_log_loss", s.proxy_hpo_iter,
                                      s.hpo_folds, derive_seed(seed, "proxy-rf-hpo")))
    gbm = GradientBoosting(loss="logloss", max_depth=None, n_classes=k,
                           seed=derive_seed(seed, "proxy-gbm"))
    gbm.set_params(**random_search_hpo(gbm, GBM_SPACE, Xt, y, "neg_log_loss", s.proxy_hpo_iter,
                                       s.hpo_folds, derive_seed(seed, "proxy-gbm-hpo")))
    return [TabularModel(lr, "linear", pre), TabularModel(rf.fit(Xt, y), "tree", pre),
            TabularModel(gbm.fit(Xt, y), "tree", pre)]


@dataclass
class ScenarioContext:
    """Everything in a scenario that does not depend on the predictor kind."""

    dataset: Dataset
    splits: SplitTriple
    base_kind: str
    seed: int
    settings: ModelSettings
    preprocessor: Preprocessor
    base: TabularModel
    proxies: list
    transformer: MetaFeatureTransformer
    base_proba_test: np.ndarray
    base_proba_prod: np.ndarray
    meta_test: np.ndarray
    meta_prod: np.ndarray
    correct_test: np.ndarray
    correct_prod: np.ndarray

    @property
    def base_test_accuracy(self) -> float:
        return 100.0 * float(self.correct_test.mean())

    @property
    def true_prod_accuracy(self) -> float:
        return 100.0 * float(self.correct_prod.mean())

    def rows(self, part):
        return self.dataset.X[getattr(self.splits, part)]


def build_context(dataset: Dataset, splits: SplitTriple, base_kind, seed,
                  settings: ModelSettings | None = None) -> ScenarioContext:
    s = settings or ModelSettings()
    if len(splits.train) == 0 or len(splits.test) == 0 or len(splits.prod) == 0:
        raise ScenarioError("train, test and prod splits must be nonempty")
    y = dataset.y
    if np.unique(y[splits.train]).size < 2:
        raise ScenarioError("train split holds a single class")
    pre = Preprocessor.fit(dataset, splits.train)
    base = fit_base_model(base_kind, dataset, splits.train, pre, derive_seed(seed, "base"),
                          s.base_rf_trees)
    proxies = train_proxy_models(dataset, splits.train, pre, derive_seed(seed, "proxies"), s)
    X_test, X_prod = dataset.X[splits.test], dataset.X[splits.prod]
    P_test, P_prod = base.predict_proba(X_test), base.predict_proba(X_prod)
    transformer = MetaFeatureTransformer(base, proxies, pre).fit(
        dataset.X[splits.train], y[splits.train], X_test, dataset.n_classes)
    missing = set(range(dataset.n_classes)) - set(np.unique(P_test.argmax(axis=1)).tolist())
    if missing:
        log.info("classes %s never predicted on test; class frequency 0", sorted(missing))
    return ScenarioContext(
        dataset, splits, base_kind, seed, s, pre, base, proxies, transformer, P_test, P_prod,
        transformer.transform(X_test, P_test), transformer.transform(X_prod, P_prod),
        P_test.argmax(axis=1) == y[splits.test], P_prod.argmax(axis=1) == y[splits.prod],
    )


@dataclass
class DriftScenario:
    id: str
    dataset_id: str
    splits: SplitTriple
    base_kind: str
    predictor_kind: str
    predictor: object
    prediction: PerformancePrediction
    true_test_accuracy: float
    true_prod_accuracy: float
    predicted_prod_accuracy: float
    delta: float
    provenance: dict = field(default_factory=dict)
    context: ScenarioContext | None = None

    def summary(self) -> dict:
        return {
            "id": self.id, "dataset": self.dataset_id, "base_kind": self.base_kind,
            "predictor_kind": self.predictor_kind,
            "true_test_accuracy": self.true_test_accuracy,
            "true_prod_accuracy": self.true_prod_accuracy,
            "predicted_prod_accuracy": self.predicted_prod_accuracy,
            "delta": self.delta, "provenance": self.provenance,
        }


def scenario_for_predictor(ctx: ScenarioContext, predictor_kind, scenario_id="scenario",
                           provenance=None) -> DriftScenario:
    seed = derive_seed(ctx.seed, "predictor", predictor_kind)
    try:
        predictor = train_predictor(predictor_kind, ctx.base_proba_test, ctx.correct_test,
                                    ctx.meta_test, ctx.settings.predictor, seed)
        pred = predictor.predict(ctx.base_proba_prod, ctx.meta_prod, seed=derive_seed(seed, "draws"))
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise ScenarioError(f"{predictor_kind} predictor failed: {exc}") from exc
    true_acc = ctx.true_prod_accuracy
    predicted = pred.predicted_accuracy
    return DriftScenario(
        scenario_id, ctx.dataset.id, ctx.splits, ctx.base_kind, predictor_kind, predictor, pred,
        ctx.base_test_accuracy, true_acc, predicted, abs(true_acc - predicted),
        dict(provenance or {}), ctx,
    )


def build_scenario(dataset: Dataset, splits: SplitTriple, base_kind, predictor_kind, seed,
                   settings: ModelSettings | None = None, scenario_id="scenario",
                   provenance=None) -> DriftScenario:
    ctx = build_context(dataset, splits, base_kind, seed, settings)
    return scenario_for_predictor(ctx, predictor_kind, scenario_id, provenance)


# ------------------------------------------------------------ persistence


def save_models(ctx: ScenarioContext, scenarios: dict, directory):
    """Write splits, preprocessing, base, proxies, transformer and predictors as JSON."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "splits.json").write_text(json.dumps(ctx.splits.to_dict()))
    models = {
        "preprocessor": ctx.preprocessor.to_dict(),
        "base": ctx.base.to_dict(),
        "transformer": ctx.transformer.to_dict(),
        "predictors": {k: sc.predictor.to_dict() for k, sc in scenarios.items()},
    }
    (d / "models.json").write_text(json.dumps(models))


def load_models(directory):
    d = Path(directory)
    models = json.loads((d / "models.json").read_text())
    pre = Preprocessor.from_dict(models["preprocessor"])
    return {
        "splits": SplitTriple.from_dict(json.loads((d / "splits.json").read_text())),
        "preprocessor": pre,
        "base": TabularModel.from_dict(models["base"], pre),
        "transformer": MetaFeatureTransformer.from_dict(models["transformer"], pre),
        "predictors": {k: predictor_from_dict(v) for k, v in models["predictors"].items()},
    }
