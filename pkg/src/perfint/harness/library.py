"""Scenario-library generation and persistence."""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..drift import (
    DriftConfigError, LinearSkewConfig, NearestNeighborsConfig, bucket_split, linear_skew,
    nearest_neighbors_drift,
)
from ..features import FEATURE_NAMES, SCHEMA_VERSION, extract_features, schema_document, shared_features
from ..learners import RandomForestClassifier
from ..learners.base import derive_seed
from ..scenario import ScenarioError, build_context, save_models, scenario_for_predictor
from ..tabular import Dataset, Preprocessor
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

LIBRARY_FORMAT = "perfint-library/1"


@dataclass
class ScenarioRecord:
    """One (scenario, predictor kind) sample: ground truth, baseline widths and UM features."""

    id: str
    dataset: str
    generator: str
    base_kind: str
    predictor_kind: str
    true_test_accuracy: float
    true_prod_accuracy: float
    predicted_prod_accuracy: float
    delta: float
    se_width: float
    bs_width: float
    intrinsic_width: float | None
    features: np.ndarray
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "id": self.id, "dataset": self.dataset, "generator": self.generator,
            "base_kind": self.base_kind, "predictor_kind": self.predictor_kind,
            "true_test_accuracy": self.true_test_accuracy,
            "true_prod_accuracy": self.true_prod_accuracy,
            "predicted_prod_accuracy": self.predicted_prod_accuracy,
            "delta": self.delta, "se_width": self.se_width, "bs_width": self.bs_width,
            "intrinsic_width": self.intrinsic_width,
            "features": dict(zip(FEATURE_NAMES, self.features.tolist())),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d):
        f = d["features"]
        d = {**d, "features": np.array([f[n] for n in FEATURE_NAMES], dtype=float)}
        return cls(**d)


@dataclass
class ScenarioLibrary:
    records: list
    config: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def select(self, predictor_kind=None, dataset=None, generator=None, exclude_dataset=None):
        return [r for r in self.records
                if (predictor_kind is None or r.predictor_kind == predictor_kind)
                and (dataset is None or r.dataset == dataset)
                and (exclude_dataset is None or r.dataset != exclude_dataset)
                and (generator is None or r.generator == generator)]

    @property
    def datasets(self) -> list:
        return list(dict.fromkeys(r.dataset for r in self.records))

    def scenario_ids(self) -> list:
        return list(dict.fromkeys(r.id for r in self.records))


# ------------------------------------------------------------- generation


def choose_skew_features(dataset: Dataset, n_features, seed, override=None) -> list[int]:
    """Numeric columns for linear-skew drift: highest RF importance first, both buckets nonempty."""
    names = [c.name for c in dataset.columns]
    if override:
        cols = [names.index(c) if isinstance(c, str) else int(c) for c in override]
        return cols[:n_features] if n_features else cols
    pre = Preprocessor.fit(dataset, np.arange(dataset.n_rows))
    rf = RandomForestClassifier(n_estimators=50, n_classes=dataset.n_classes,
                                seed=derive_seed(seed, "feature-choice", dataset.id))
    rf.fit(pre.tree(dataset.X), dataset.y)
    order = np.lexsort((np.arange(len(names)), -rf.feature_importances_))
    chosen = []
    for j in order:
        if dataset.columns[j].kind != "numeric":
            continue
        A, B, _ = bucket_split(dataset.X[:, j])
        if len(A) and len(B):
            chosen.append(int(j))
        if len(chosen) == n_features:
            break
    if not chosen:
        raise ConfigError(f"dataset {dataset.id}: no numeric column splits into two buckets")
    return chosen


def _slug(s):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", str(s))


def plan_tasks(config: ExperimentConfig, datasets: list[Dataset]) -> list[dict]:
    """Scenario specifications in a fixed order (independent of worker count)."""
    tasks = []
    p_tr, p_te, p_pr = config.fractions
    master = config.master_seed
    ls = config.linear_skew
    nn = config.nearest_neighbors
    for di, (src, ds) in enumerate(zip(config.datasets, datasets)):
        gens = {config.train_generator, config.eval_generator}
        if "linear_skew" in gens:
            feats = choose_skew_features(ds, ls.n_features, master, src.features)
            for f in feats:
                for r in ls.R:
                    for s in range(ls.seeds):
                        for base in config.base_kinds:
                            sid = _slug(f"{ds.id}-ls-f{f}-r{r}-s{s}-{base}")
                            tasks.append({
                                "id": sid, "dataset_index": di, "generator": "linear_skew",
                                "base_kind": base,
                                "drift": LinearSkewConfig(f, r, p_tr, p_te, p_pr, ls.batch_size).to_dict(),
                                "seed": derive_seed(master, ds.id, "ls", f, r, s, base),
                            })
        if "nearest_neighbors" in gens and nn.count > 0:
            for base in config.base_kinds:
                for i in range(nn.count):
                    seed = derive_seed(master, ds.id, "nn", i, base)
                    lo, hi = nn.p_down
                    p_down = lo + (hi - lo) * np.random.default_rng(derive_seed(seed, "p_down")).random()
                    cfg = NearestNeighborsConfig(p_tr, p_te, p_pr, nn.p_set, nn.p_near, float(p_down))
                    tasks.append({
                        "id": _slug(f"{ds.id}-nn-{i}-{base}"), "dataset_index": di,
                        "generator": "nearest_neighbors", "base_kind": base,
                        "drift": cfg.to_dict(), "seed": seed,
                    })
    return tasks


_WORKER = {}


def _init_worker(config_dict, datasets, out_dir):
    _WORKER["config"] = ExperimentConfig.from_dict(config_dict)
    _WORKER["datasets"] = datasets
    _WORKER["out_dir"] = out_dir


def _split_stats(conf, n_resamples, seed):
    """Standard error and bootstrap standard error of the mean confidence, in accuracy points."""
    n = len(conf)
    se = 100.0 * float(np.std(conf, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    rng = np.random.default_rng(seed)
    means = conf[rng.integers(0, n, size=(n_resamples, n))].mean(axis=1)
    return se, 100.0 * float(means.std())


def run_task(task, config: ExperimentConfig, datasets, out_dir=None):
    """Build one scenario for every predictor kind; returns (records, failure or None)."""
    ds = datasets[task["dataset_index"]]
    drift = dict(task["drift"])
    kind = drift.pop("kind")
    try:
        if kind == "linear_skew":
            splits = linear_skew(ds, LinearSkewConfig(**drift), derive_seed(task["seed"], "drift"))
        else:
            splits = nearest_neighbors_drift(ds, NearestNeighborsConfig(**drift),
                                             derive_seed(task["seed"], "drift"))
        if len(splits.prod) < 8:
            raise ScenarioError(f"prod split too small ({len(splits.prod)} rows)")
        ctx = build_context(ds, splits, task["base_kind"], task["seed"], config.models)
        shared = shared_features(ctx)
        records, scenarios = [], {}
        for pk in config.predictor_kinds:
            sc = scenario_for_predictor(ctx, pk, task["id"], {"drift": task["drift"], "seed": task["seed"]})
            fv = extract_features(sc, shared=shared)
            conf = sc.prediction.per_point_confidences
            se, bs = _split_stats(conf, config.models.bootstrap_resamples,
                                  derive_seed(task["seed"], "bs-baseline", pk))
            scenarios[pk] = sc
            records.append(ScenarioRecord(
                task["id"], ds.id, task["generator"], task["base_kind"], pk,
                sc.true_test_accuracy, sc.true_prod_accuracy, sc.predicted_prod_accuracy, sc.delta,
                se, bs, sc.prediction.intrinsic_width, fv.values,
                {"drift": task["drift"], "seed": task["seed"],
                 "sizes": [len(splits.train), len(splits.test), len(splits.prod)]},
            ))
    except (ScenarioError, DriftConfigError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("scenario %s skipped: %s", task["id"], exc)
        return [], {"id": task["id"], "error": str(exc)}
    if out_dir is not None:
        sdir = Path(out_dir) / f"scenario_{task['id']}"
        sdir.mkdir(parents=True, exist_ok=True)
        (sdir / "splits.json").write_text(json.dumps(splits.to_dict()))
        if config.persist_models:
            save_models(ctx, scenarios, sdir)
    return records, None


def _worker_task(task):
    return run_task(task, _WORKER["config"], _WORKER["datasets"], _WORKER["out_dir"])


def load_datasets(config: ExperimentConfig):
    out = []
    for src in config.datasets:
        out.append(src.load(config.base_dir))
    ids = [d.id for d in out]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate dataset ids: {ids}")
    return out


def generate_library(config: ExperimentConfig, out_dir=None, jobs=1) -> ScenarioLibrary:
    datasets = load_datasets(config)
    tasks = plan_tasks(config, datasets)
    log.info("generating %d scenarios over %d datasets", len(tasks), len(datasets))
    if jobs > 1:
        cfg = {**config.to_dict(), "base_dir": config.base_dir}
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(cfg, datasets, out_dir)) as ex:
            results = list(ex.map(_worker_task, tasks, chunksize=1))
    else:
        results = [run_task(t, config, datasets, out_dir) for t in tasks]
    records, failures = [], []
    for recs, fail in results:
        records.extend(recs)
        if fail:
            failures.append(fail)
    lib = ScenarioLibrary(records, config.to_dict(), failures)
    if out_dir is not None:
        save_library(lib, out_dir)
    return lib


# ------------------------------------------------------------ persistence


def save_library(lib: ScenarioLibrary, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_id = {}
    for r in lib.records:
        by_id.setdefault(r.id, []).append(r)
    for sid, recs in by_id.items():
        sdir = out / f"scenario_{sid}"
        sdir.mkdir(exist_ok=True)
        meta = {"id": sid, "schema_version": SCHEMA_VERSION,
                "records": [r.to_dict() for r in recs]}
        (sdir / "meta.json").write_text(json.dumps(meta, indent=1))
    index = {"format": LIBRARY_FORMAT, "schema_version": SCHEMA_VERSION, "config": lib.config,
             "scenarios": list(by_id), "failures": lib.failures}
    (out / "index.json").write_text(json.dumps(index, indent=1))
    (out / "schema.json").write_text(json.dumps(schema_document(), indent=1))
    kinds = dict.fromkeys(r.predictor_kind for r in lib.records)
    for k in kinds:
        rows = [r for r in lib.records if r.predictor_kind == k]
        with open(out / f"features_{k}.csv", "w") as fh:
            fh.write(f"# schema: {SCHEMA_VERSION}\n")
            fh.write(",".join(("id", "dataset", "delta") + FEATURE_NAMES) + "\n")
            for r in rows:
                fh.write(",".join([r.id, r.dataset, repr(r.delta)] + [repr(float(v)) for v in r.features]) + "\n")


def load_library(path) -> ScenarioLibrary:
    path = Path(path)
    try:
        index = json.loads((path / "index.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario library at {path}: {exc}") from exc
    if index.get("format") != LIBRARY_FORMAT:
        raise ConfigError(f"{path}: not a scenario library")
    if index.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: feature schema {index.get('schema_version')} != {SCHEMA_VERSION}")
    records = []
    for sid in index["scenarios"]:
        meta = json.loads((path / f"scenario_{sid}" / "meta.json").read_text())
        records.extend(ScenarioRecord.from_dict(r) for r in meta["records"])
    return ScenarioLibrary(records, index["config"], index.get("failures", []))
