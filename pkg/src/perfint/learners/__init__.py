"""In-repo supervised and unsupervised learners."""

from .base import Learner, NotFittedError, derive_seed, learner_from_dict, learner_from_json
from .hpo import DART_SPACE, GBM_SPACE, LOGISTIC_SPACE, RF_SPACE, RandInt, random_search_hpo
from .isotonic import IsotonicMap, fit_isotonic
from .linear import DegenerateLabelsError, LogisticRegression
from .trees import GradientBoosting, RandomForestClassifier, TreeEnsemble
from .unsupervised import PCA, GaussianKDE, KNNDistance, pca_top_component


def fit_logistic(X, y, penalty="l2", C=1.0, seed=0, **kw) -> LogisticRegression:
    return LogisticRegression(penalty=penalty, C=C, seed=seed, **kw).fit(X, y)


def fit_random_forest(X, y, n_estimators=100, max_depth=None, min_samples_split=2,
                      max_features="sqrt", seed=0, **kw) -> RandomForestClassifier:
    return RandomForestClassifier(n_estimators=n_estimators, max_depth=max_depth,
                                  min_samples_split=min_samples_split,
                                  max_features=max_features, seed=seed, **kw).fit(X, y)


def fit_gbt(X, y, loss="squared", tau=0.5, dropout=0.0, seed=0, **params) -> GradientBoosting:
    return GradientBoosting(loss=loss, tau=tau, dropout=dropout, seed=seed, **params).fit(X, y)


__all__ = [
    "Learner", "NotFittedError", "derive_seed", "learner_from_dict", "learner_from_json",
    "DART_SPACE", "GBM_SPACE", "LOGISTIC_SPACE", "RF_SPACE", "RandInt", "random_search_hpo",
    "IsotonicMap", "fit_isotonic", "DegenerateLabelsError", "LogisticRegression",
    "GradientBoosting", "RandomForestClassifier", "TreeEnsemble", "PCA", "GaussianKDE",
    "KNNDistance", "pca_top_component", "fit_logistic", "fit_random_forest", "fit_gbt",
]
