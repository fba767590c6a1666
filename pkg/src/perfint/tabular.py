"""Tabular data handling: CSV ingestion, splits, histograms and bootstrap widths."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

UNKNOWN_CODE = -1
_MISSING = {"", "na", "nan", "null", "none", "?"}


class DataError(ValueError):
    """Raised for malformed input data or schema violations."""


class EmptyInputError(DataError):
    pass


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str  # "numeric" | "categorical"
    categories: tuple[str, ...] = ()

    def encode(self, value: str) -> float:
        if self.kind == "numeric":
            if value.strip().lower() in _MISSING:
                return math.nan
            return float(value)
        try:
            return float(self.categories.index(value))
        except ValueError:
            return float(UNKNOWN_CODE)

    def decode(self, code: float) -> str:
        if self.kind == "numeric":
            return "" if math.isnan(code) else repr(float(code))
        c = int(code)
        return self.categories[c] if 0 <= c < len(self.categories) else ""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled tabular data with numerically encoded columns.

    ``X`` holds numeric values and integer category codes (as floats, NaN for
    missing numeric cells); ``y`` holds class indices in ``[0, n_classes)``.
    """

    X: np.ndarray
    y: np.ndarray
    columns: tuple[ColumnMeta, ...]
    classes: tuple[str, ...]
    id: str = "dataset"
    label_name: str = "label"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != len(self.columns):
            raise DataError("X must be 2-D with one column per ColumnMeta")
        if len(y) != len(X):
            raise DataError("X and y lengths differ")
        if len(self.classes) < 2:
            raise DataError("at least two classes are required")
        if len(y) and (y.min() < 0 or y.max() >= len(self.classes)):
            raise DataError("labels out of range")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n_rows(self) -> int:
        return len(self.y)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([c.kind == "categorical" for c in self.columns], dtype=bool)

    def subset(self, idx: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(idx, dtype=np.int64)
        return self.X[idx], self.y[idx]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.id == other.id
            and self.columns == other.columns
            and self.classes == other.classes
            and self.label_name == other.label_name
            and np.array_equal(self.X, other.X, equal_nan=True)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None


def _read_schema(schema) -> dict:
    if isinstance(schema, (str, os.PathLike)):
        with open(schema) as fh:
            schema = json.load(fh)
    if "label" not in schema:
        raise DataError("schema must declare a label column")
    return schema


def load_dataset(path, schema) -> Dataset:
    """Load a CSV file described by a JSON schema.

    The schema is a mapping (or a path to a JSON file) with keys ``label``,
    ``columns`` (name -> "numeric" | "categorical"), and optionally
    ``exclude``, ``classes`` and ``name``.
    """
    schema = _read_schema(schema)
    label = schema["label"]
    kinds = dict(schema.get("columns", {}))
    exclude = set(schema.get("exclude", []))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: empty file") from None
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            records.append((lineno, row))
    if not records:
        raise EmptyInputError(f"{path}: no data rows")
    if label not in header:
        raise DataError(f"label column {label!r} missing from header")
    feature_names = [h for h in header if h != label and h not in exclude]
    undeclared = [h for h in feature_names if h not in kinds]
    if undeclared:
        raise DataError(f"columns not declared in schema: {undeclared}")
    missing = [k for k in kinds if k not in header]
    if missing:
        raise DataError(f"schema columns absent from header: {missing}")
    pos = {h: i for i, h in enumerate(header)}
    li = pos[label]

    labels = [row[li] for _, row in records]
    if "classes" in schema:
        classes = tuple(str(c) for c in schema["classes"])
        known = set(classes)
        for (lineno, _), lab in zip(records, labels):
            if lab not in known:
                raise DataError(f"{path}:{lineno}: unknown label value {lab!r}")
    else:
        classes = tuple(sorted(set(labels)))
    class_index = {c: i for i, c in enumerate(classes)}

    columns = []
    for name in feature_names:
        kind = kinds[name]
        if kind not in ("numeric", "categorical"):
            raise DataError(f"column {name!r}: unknown kind {kind!r}")
        cats: tuple[str, ...] = ()
        if kind == "categorical":
            cats = tuple(sorted({row[pos[name]] for _, row in records}))
        columns.append(ColumnMeta(name, kind, cats))

    X = np.empty((len(records), len(columns)))
    for r, (lineno, row) in enumerate(records):
        for c, meta in enumerate(columns):
            try:
                X[r, c] = meta.encode(row[pos[meta.name]])
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: cannot parse {row[pos[meta.name]]!r} in column {meta.name!r}"
                ) from None
    y = np.array([class_index[lab] for lab in labels], dtype=np.int64)
    name = schema.get("name") or os.path.splitext(os.path.basename(str(path)))[0]
    return Dataset(X, y, tuple(columns), classes, id=name, label_name=label)


def write_dataset(dataset: Dataset, path, schema_path=None) -> dict:
    """Write ``dataset`` as CSV (+ schema JSON); returns the schema mapping."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([c.name for c in dataset.columns] + [dataset.label_name])
        for row, lab in zip(dataset.X, dataset.y):
            w.writerow([m.decode(v) for m, v in zip(dataset.columns, row)] + [dataset.classes[lab]])
    schema = {
        "name": dataset.id,
        "label": dataset.label_name,
        "columns": {c.name: c.kind for c in dataset.columns},
        "classes": list(dataset.classes),
    }
    if schema_path is not None:
        with open(schema_path, "w") as fh:
            json.dump(schema, fh, indent=2)
    return schema


def make_blobs(n_rows=600, n_features=6, n_classes=3, spread=2.0, seed=0, name="blobs") -> Dataset:
    """Gaussian-blob classification data with overlapping classes."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-4, 4, size=(n_classes, n_features))
    y = np.arange(n_rows) % n_classes
    rng.shuffle(y)
    X = centers[y] + rng.normal(scale=spread, size=(n_rows, n_features))
    cols = tuple(ColumnMeta(f"x{i}", "numeric") for i in range(n_features))
    return Dataset(X, y, cols, tuple(f"c{k}" for k in range(n_classes)), id=name)


# ---------------------------------------------------------------- splits


@dataclass(frozen=True)
class SplitTriple:
    train: np.ndarray
    test: np.ndarray
    prod: np.ndarray
    fractions: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("train", "test", "prod"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        all_idx = np.concatenate([self.train, self.test, self.prod])
        if len(np.unique(all_idx)) != len(all_idx):
            raise ValueError("split index sets overlap")

    def to_dict(self) -> dict:
        return {
            "train": self.train.tolist(),
            "test": self.test.tolist(),
            "prod": self.prod.tolist(),
            "fractions": list(self.fractions),
        }

    @classmethod
    def from_dict(cls, d) -> "SplitTriple":
        return cls(d["train"], d["test"], d["prod"], tuple(d["fractions"]))

    def __eq__(self, other):
        return (
            isinstance(other, SplitTriple)
            and np.array_equal(self.train, other.train)
            and np.array_equal(self.test, other.test)
            and np.array_equal(self.prod, other.prod)
        )

    __hash__ = None


def check_fractions(p_tr, p_te, p_pr) -> tuple[float, float, float]:
    fr = (float(p_tr), float(p_te), float(p_pr))
    if any(not 0.0 <= p <= 1.0 for p in fr):
        raise ValueError(f"fractions must lie in [0, 1], got {fr}")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fr)!r}")
    return fr


def split_sizes(n: int, fractions: Sequence[float], rng: np.random.Generator) -> list[int]:
    """Floor sizes, with the remainder handed out by seeded draws weighted by fraction."""
    fr = np.asarray(fractions, dtype=float)
    sizes = [int(math.floor(p * n + 1e-9)) for p in fr]
    rem = n - sum(sizes)
    if rem > 0:
        w = fr / fr.sum()
        for k in rng.choice(len(fr), size=rem, p=w):
            sizes[int(k)] += 1
    return sizes


def random_split(dataset_or_n, p_tr, p_te, p_pr, seed) -> SplitTriple:
    n = dataset_or_n if isinstance(dataset_or_n, (int, np.integer)) else dataset_or_n.n_rows
    fr = check_fractions(p_tr, p_te, p_pr)
    if n <= 0:
        raise EmptyInputError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    a, b, _ = split_sizes(n, fr, rng)
    return SplitTriple(np.sort(perm[:a]), np.sort(perm[a:a + b]), np.sort(perm[a + b:]), fr)


# ------------------------------------------------------------ histograms


@dataclass(frozen=True)
class Histogram:
    bin_edges: tuple  # real edges, or category labels for categorical histograms
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def normalized(self) -> np.ndarray:
        t = self.counts.sum()
        return self.counts / t if t > 0 else np.zeros(len(self.counts))

    def to_dict(self) -> dict:
        return {"bin_edges": list(self.bin_edges), "counts": self.counts.tolist()}


def build_histogram(values, binning, clip: bool = True) -> Histogram:
    """Bin ``values`` into half-open bins ``[e_i, e_{i+1})``, the last bin closed.

    ``binning`` is either a strictly increasing edge sequence, or an int ``K``
    meaning categorical codes ``0..K-1`` with one bin each. With ``clip``
    out-of-range values land in the nearest boundary bin; otherwise they are
    dropped.
    """
    values = np.asarray(values, dtype=float).ravel()
    if isinstance(binning, (int, np.integer)):
        if binning < 1:
            raise ValueError("categorical binning needs at least one category")
        codes = np.rint(values).astype(np.int64)
        ok = (codes >= 0) & (codes < binning)
        if clip:
            codes = np.clip(codes, 0, binning - 1)
            ok = np.ones(len(codes), dtype=bool)
        counts = np.bincount(codes[ok], minlength=int(binning))
        return Histogram(tuple(range(int(binning))), counts)
    edges = np.asarray(binning, dtype=float)
    if edges.ndim != 1 or len(edges) < 2:
        raise ValueError("binning needs at least two edges")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    nb = len(edges) - 1
    idx = np.searchsorted(edges, values, side="right") - 1
    idx[values == edges[-1]] = nb - 1
    if clip:
        idx = np.clip(idx, 0, nb - 1)
    else:
        idx = idx[(values >= edges[0]) & (values <= edges[-1])]
    counts = np.bincount(idx, minlength=nb)
    return Histogram(tuple(edges.tolist()), counts)


# -------------------------------------------------------------- bootstrap


def bootstrap_interval_width(values, n_resamples: int = 1000, level: float = 0.95, seed=0) -> float:
    """Half-width of the percentile bootstrap interval for the mean of ``values``."""
    v = np.asarray(values, dtype=float).ravel()
    if len(v) == 0:
        raise EmptyInputError("bootstrap of an empty sample")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if n_resamples < 100:
        raise ValueError("n_resamples must be at least 100")
    if np.all(v == v[0]):
        return 0.0
    rng = np.random.default_rng(seed)
    means = v[rng.integers(0, len(v), size=(n_resamples, len(v)))].mean(axis=1)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(hi - lo) / 2


# ----------------------------------------------------------- preprocessing


@dataclass
class Preprocessor:
    """Train-split statistics: median imputation, one-hot expansion, scaling.

    ``tree`` matrices keep categorical codes; ``linear`` matrices one-hot
    expand categoricals and standardize numeric columns.
    """

    categorical: np.ndarray
    n_categories: list[int]
    medians: np.ndarray = field(default=None)
    mean: np.ndarray = field(default=None)
    scale: np.ndarray = field(default=None)

    @classmethod
    def fit(cls, dataset: Dataset, rows) -> "Preprocessor":
        X = dataset.X[np.asarray(rows)]
        cat = dataset.categorical_mask
        pre = cls(cat, [len(c.categories) for c in dataset.columns])
        with np.errstate(all="ignore"):
            med = np.nanmedian(X, axis=0) if len(X) else np.zeros(X.shape[1])
        pre.medians = np.where(np.isnan(med), 0.0, med)
        lin = pre._expand(pre.tree(X))
        pre.mean = lin.mean(axis=0)
        sd = lin.std(axis=0)
        pre.scale = np.where(sd > 1e-12, sd, 1.0)
        onehot = pre._onehot_mask()
        pre.mean[onehot] = 0.0
        pre.scale[onehot] = 1.0
        return pre

    def _onehot_mask(self) -> np.ndarray:
        m = []
        for is_cat, k in zip(self.categorical, self.n_categories):
            m.extend([True] * k if is_cat else [False])
        return np.array(m, dtype=bool)

    def tree(self, X) -> np.ndarray:
        X = np.array(X, dtype=float, copy=True)
        nan = np.isnan(X)
        if nan.any():
            X[nan] = np.broadcast_to(self.medians, X.shape)[nan]
        return X

    def _expand(self, Xt) -> np.ndarray:
        parts = []
        for j, (is_cat, k) in enumerate(zip(self.categorical, self.n_categories)):
            if is_cat:
                codes = Xt[:, j].astype(np.int64)
                oh = np.zeros((len(Xt), k))
                ok = (codes >= 0) & (codes < k)
                oh[np.nonzero(ok)[0], codes[ok]] = 1.0
                parts.append(oh)
            else:
                parts.append(Xt[:, j:j + 1])
        return np.hstack(parts) if parts else np.empty((len(Xt), 0))

    def linear(self, X) -> np.ndarray:
        return (self._expand(self.tree(X)) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {
            "categorical": self.categorical.tolist(),
            "n_categories": list(self.n_categories),
            "medians": self.medians.tolist(),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "Preprocessor":
        return cls(
            np.array(d["categorical"], dtype=bool),
            list(d["n_categories"]),
            np.array(d["medians"]),
            np.array(d["mean"]),
            np.array(d["scale"]),
        )


def distance_matrix_features(dataset: Dataset) -> np.ndarray:
    """Features for nearest-neighbor drift: standardized numerics, one-hot/sqrt(2) categoricals."""
    pre = Preprocessor.fit(dataset, np.arange(dataset.n_rows))
    Z = pre.linear(dataset.X)
    Z[:, pre._onehot_mask()] /= math.sqrt(2.0)
    return Z


def as_index_array(rows: Iterable[int]) -> np.ndarray:
    return np.asarray(list(rows) if not isinstance(rows, np.ndarray) else rows, dtype=np.int64)
