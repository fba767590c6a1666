"""Isotonic regression by pool-adjacent-violators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def pava(y, w=None) -> np.ndarray:
    """Weighted least-squares nondecreasing fit to ``y`` (in the given order)."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    n = len(y)
    means = np.empty(n)
    weights = np.empty(n)
    sizes = np.empty(n, dtype=np.int64)
    top = -1
    for i in range(n):
        top += 1
        means[top], weights[top], sizes[top] = y[i], w[i], 1
        while top > 0 and means[top - 1] > means[top]:
            wt = weights[top - 1] + weights[top]
            means[top - 1] = (weights[top - 1] * means[top - 1] + weights[top] * means[top]) / wt
            weights[top - 1] = wt
            sizes[top - 1] += sizes[top]
            top -= 1
    return np.repeat(means[:top + 1], sizes[:top + 1])


@dataclass(frozen=True)
class IsotonicMap:
    """Monotone map evaluated by linear interpolation, clamped outside the breakpoints."""

    x: np.ndarray
    y: np.ndarray

    def __call__(self, scores) -> np.ndarray:
        s = np.asarray(scores, dtype=float)
        if len(self.x) == 0:
            return s.copy()
        if len(self.x) == 1:
            return np.full(s.shape, self.y[0])
        return np.interp(s, self.x, self.y)

    @classmethod
    def identity(cls) -> "IsotonicMap":
        return cls(np.empty(0), np.empty(0))

    @property
    def is_identity(self) -> bool:
        return len(self.x) == 0

    def to_dict(self):
        return {"x": self.x.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["x"], float), np.array(d["y"], float))


def fit_isotonic(scores, targets, weights=None) -> IsotonicMap:
    """Fit a nondecreasing map from ``scores`` to ``targets``.

    Tied scores are pooled first (weighted mean), so breakpoints are strictly
    increasing.
    """
    s = np.asarray(scores, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if len(s) != len(t):
        raise ValueError("scores and targets differ in length")
    if len(s) == 0:
        raise ValueError("isotonic fit on empty input")
    w = np.ones_like(s) if weights is None else np.asarray(weights, dtype=float)
    order = np.argsort(s, kind="mergesort")
    s, t, w = s[order], t[order], w[order]
    ux, inv = np.unique(s, return_inverse=True)
    wsum = np.bincount(inv, weights=w)
    tmean = np.bincount(inv, weights=w * t) / wsum
    return IsotonicMap(ux, pava(tmean, wsum))
