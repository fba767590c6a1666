"""Multinomial logistic regression with l1 or l2 penalty."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .base import Learner


class DegenerateLabelsError(ValueError):
    """Raised when a classifier is asked to fit a single class."""


def _log_softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))


class LogisticRegression(Learner):
    """Softmax regression minimizing mean log-loss + penalty / (C * n).

    The l2 objective is ``mean_nll + ||W||^2 / (2 C n)`` and the l1 objective
    ``mean_nll + ||W||_1 / (C n)``; intercepts are not penalized. Both are
    solved with L-BFGS-B, the l1 case via the split ``W = W+ - W-`` with
    nonnegativity bounds.
    """

    kind = "logistic"

    def __init__(self, penalty="l2", C=1.0, max_iter=10_000, tol=1e-6, n_classes=None, seed=0):
        self.penalty = penalty
        self.C = C
        self.max_iter = max_iter
        self.tol = tol
        self.n_classes = n_classes
        self.seed = seed

    def get_params(self):
        return {"penalty": self.penalty, "C": self.C, "max_iter": self.max_iter,
                "tol": self.tol, "n_classes": self.n_classes, "seed": self.seed}

    def objective(self, coef, intercept, X, y):
        """Regularized loss at (coef, intercept); used by tests as an oracle target."""
        Z = X @ coef + intercept
        nll = -_log_softmax(Z)[np.arange(len(y)), y].mean()
        reg = 1.0 / (self.C * len(y))
        if self.penalty == "l2":
            return nll + 0.5 * reg * np.sum(coef**2)
        return nll + reg * np.sum(np.abs(coef))

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        if self.penalty not in ("l1", "l2"):
            raise ValueError(f"unknown penalty {self.penalty!r}")
        if not self.C > 0:
            raise ValueError("C must be positive")
        if np.unique(y).size < 2:
            raise DegenerateLabelsError("logistic regression needs at least two classes")
        n, d = X.shape
        k = max(self.n_classes or int(y.max()) + 1, 2)
        Y = np.zeros((n, k))
        Y[np.arange(n), y] = 1.0
        reg = 1.0 / (self.C * n)

        def nll_grad(W, b):
            Z = X @ W + b
            L = _log_softmax(Z)
            P = np.exp(L)
            f = -(L * Y).sum() / n
            G = (P - Y) / n
            return f, X.T @ G, G.sum(axis=0)

        if self.penalty == "l2":
            def fun(theta):
                W = theta[:d * k].reshape(d, k)
                b = theta[d * k:]
                f, gW, gb = nll_grad(W, b)
                return f + 0.5 * reg * np.sum(W * W), np.concatenate([(gW + reg * W).ravel(), gb])

            x0 = np.zeros(d * k + k)
            bounds = None
        else:
            def fun(theta):
                Wp = theta[:d * k].reshape(d, k)
                Wn = theta[d * k:2 * d * k].reshape(d, k)
                b = theta[2 * d * k:]
                f, gW, gb = nll_grad(Wp - Wn, b)
                f += reg * (Wp.sum() + Wn.sum())
                return f, np.concatenate([(gW + reg).ravel(), (-gW + reg).ravel(), gb])

            x0 = np.zeros(2 * d * k + k)
            bounds = [(0, None)] * (2 * d * k) + [(None, None)] * k
        res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": self.max_iter, "gtol": self.tol, "ftol": 1e-15,
                                "maxcor": 20})
        theta = res.x
        if self.penalty == "l2":
            self.coef_ = theta[:d * k].reshape(d, k)
            self.intercept_ = theta[d * k:]
        else:
            self.coef_ = theta[:d * k].reshape(d, k) - theta[d * k:2 * d * k].reshape(d, k)
            self.intercept_ = theta[2 * d * k:]
        self.n_classes_ = k
        self.n_iter_ = int(res.nit)
        return self

    def decision_function(self, X):
        self._check_fitted("coef_")
        return np.asarray(X, dtype=float) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return np.exp(_log_softmax(self.decision_function(X)))

    def _state(self):
        return {"coef": self.coef_.tolist(), "intercept": self.intercept_.tolist(),
                "n_classes": self.n_classes_}

    def _load_state(self, s):
        self.coef_ = np.array(s["coef"], float).reshape(-1, s["n_classes"])
        self.intercept_ = np.array(s["intercept"], float)
        self.n_classes_ = s["n_classes"]
        self.n_iter_ = 0
