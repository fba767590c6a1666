"""PCA, Gaussian kernel density and nearest-neighbor distance scoring."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp


def _leading_sign(vecs):
    """Flip columns so each column's largest-magnitude loading is positive."""
    idx = np.abs(vecs).argmax(axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


class PCA:
    def __init__(self, n_components=1):
        self.n_components = n_components

    def fit(self, X) -> "PCA":
        X = np.asarray(X, dtype=float)
        if X.shape[0] < 2:
            raise ValueError("PCA needs at least two rows")
        self.mean_ = X.mean(axis=0)
        cov = np.cov(X - self.mean_, rowvar=False).reshape(X.shape[1], X.shape[1])
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]
        if evals[0] <= 1e-12:
            raise ValueError("PCA on zero-variance data")
        k = min(self.n_components, X.shape[1])
        self.components_ = _leading_sign(evecs[:, :k])
        self.explained_variance_ = evals[:k]
        return self

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean_) @ self.components_

    def to_dict(self):
        return {"mean": self.mean_.tolist(), "components": self.components_.tolist(),
                "explained_variance": self.explained_variance_.tolist(),
                "n_components": self.n_components}

    @classmethod
    def from_dict(cls, d):
        p = cls(d["n_components"])
        p.mean_ = np.array(d["mean"], float)
        p.components_ = np.array(d["components"], float).reshape(len(p.mean_), -1)
        p.explained_variance_ = np.array(d["explained_variance"], float)
        return p


def pca_top_component(X) -> np.ndarray:
    """Projection of each row onto the leading principal axis."""
    return PCA(1).fit(X).transform(X)[:, 0]


class GaussianKDE:
    """Isotropic Gaussian kernel density; ``score`` returns log densities."""

    def __init__(self, bandwidth=0.2):
        self.bandwidth = bandwidth

    def fit(self, Z) -> "GaussianKDE":
        self.points_ = np.asarray(Z, dtype=float)
        if len(self.points_) == 0:
            raise ValueError("KDE needs at least one point")
        return self

    def score(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        h = self.bandwidth
        P = self.points_
        d = P.shape[1]
        sq = (Z**2).sum(1)[:, None] + (P**2).sum(1)[None, :] - 2 * Z @ P.T
        sq = np.maximum(sq, 0.0)
        log_norm = math.log(len(P)) + 0.5 * d * math.log(2 * math.pi * h * h)
        return logsumexp(-sq / (2 * h * h), axis=1) - log_norm


class KNNDistance:
    """Mean Euclidean distance to the ``k`` nearest reference points."""

    def __init__(self, k=10):
        self.k = k

    def fit(self, X) -> "KNNDistance":
        self.points_ = np.asarray(X, dtype=float)
        self._tree = cKDTree(self.points_)
        return self

    def score(self, X) -> np.ndarray:
        k = min(self.k, len(self.points_))
        dist, _ = self._tree.query(np.asarray(X, dtype=float), k=k)
        dist = dist.reshape(len(X), k)
        return dist.mean(axis=1)
