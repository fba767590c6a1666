"""Experiment configuration (JSON)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..predictors import PREDICTOR_KINDS
from ..scenario import BASE_KINDS, ModelSettings
from ..tabular import check_fractions, load_dataset, make_blobs

DEFAULT_R_VALUES = [0, 1, 5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 95, 99, 100]
DEFAULT_ALPHAS = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSource:
    """A CSV + schema pair, or a synthetic generator (``synthetic: "blobs"``)."""

    path: str | None = None
    schema: str | dict | None = None
    synthetic: str | None = None
    params: dict = field(default_factory=dict)
    features: list | None = None  # linear-skew column override (names or indices)

    def load(self, base_dir="."):
        if self.synthetic is not None:
            if self.synthetic != "blobs":
                raise ConfigError(f"unknown synthetic dataset {self.synthetic!r}")
            return make_blobs(**self.params)
        if self.path is None or self.schema is None:
            raise ConfigError("dataset source needs path and schema, or synthetic")
        schema = self.schema
        if isinstance(schema, str):
            schema = str(_resolve(base_dir, schema))
        try:
            return load_dataset(_resolve(base_dir, self.path), schema)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load dataset {self.path}: {exc}") from exc


def _resolve(base_dir, p):
    p = Path(p)
    return p if p.is_absolute() else Path(base_dir) / p


@dataclass
class LinearSkewSettings:
    R: list = field(default_factory=lambda: list(DEFAULT_R_VALUES))
    seeds: int = 5
    n_features: int = 2
    batch_size: int = 20


@dataclass
class NearestNeighborsSettings:
    count: int = 0
    p_set: float = 0.5
    p_near: float = 0.5
    p_down: tuple = (0.5, 0.7)


@dataclass
class UMSettings:
    n_members: int = 10
    params: dict = field(default_factory=dict)
    min_scenarios: int = 50


@dataclass
class ExperimentConfig:
    datasets: list
    fractions: tuple = (0.35, 0.35, 0.3)
    linear_skew: LinearSkewSettings = field(default_factory=LinearSkewSettings)
    nearest_neighbors: NearestNeighborsSettings = field(default_factory=NearestNeighborsSettings)
    base_kinds: list = field(default_factory=lambda: ["random_forest", "logistic"])
    predictor_kinds: list = field(default_factory=lambda: list(PREDICTOR_KINDS))
    alphas: list = field(default_factory=lambda: list(DEFAULT_ALPHAS))
    train_generator: str = "linear_skew"
    eval_generator: str = "linear_skew"
    models: ModelSettings = field(default_factory=ModelSettings)
    um: UMSettings = field(default_factory=UMSettings)
    ci_resamples: int = 2000
    master_seed: int = 0
    persist_models: bool = False
    base_dir: str = "."

    def validate(self):
        if len(self.datasets) < 2:
            raise ConfigError("leave-one-out needs at least two datasets")
        try:
            check_fractions(*self.fractions)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for a in self.alphas:
            if not 0.0 < a < 1.0:
                raise ConfigError(f"alpha {a} outside (0, 1)")
        for r in self.linear_skew.R:
            if not 0 <= r <= 100:
                raise ConfigError(f"R value {r} outside [0, 100]")
        for k in self.base_kinds:
            if k not in BASE_KINDS:
                raise ConfigError(f"unknown base kind {k!r}")
        for k in self.predictor_kinds:
            if k not in PREDICTOR_KINDS:
                raise ConfigError(f"unknown predictor kind {k!r}")
        for g in (self.train_generator, self.eval_generator):
            if g not in ("linear_skew", "nearest_neighbors"):
                raise ConfigError(f"unknown generator {g!r}")
        lo, hi = self.nearest_neighbors.p_down
        if not 0.0 <= lo <= hi < 1.0:
            raise ConfigError("nearest-neighbors p_down range must satisfy 0 <= lo <= hi < 1")
        return self

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        d["fractions"] = list(self.fractions)
        d["nearest_neighbors"]["p_down"] = list(self.nearest_neighbors.p_down)
        return d

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d, base_dir="."):
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(
                datasets=[DatasetSource(**s) for s in d.pop("datasets")],
                fractions=tuple(d.pop("fractions", (0.35, 0.35, 0.3))),
                linear_skew=LinearSkewSettings(**d.pop("linear_skew", {})),
                nearest_neighbors=NearestNeighborsSettings(**{
                    **d.pop("nearest_neighbors", {})}),
                models=ModelSettings.from_dict(d.pop("models", {})),
                um=UMSettings(**d.pop("um", {})),
                base_dir=str(d.pop("base_dir", base_dir)),
                **d,
            )
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        cfg.nearest_neighbors.p_down = tuple(cfg.nearest_neighbors.p_down)
        return cfg.validate()

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d, base_dir=str(path.parent))
