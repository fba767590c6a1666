import csv
import json
import shutil

import numpy as np
import pytest

from perfint.cli import main
from perfint.harness import (
    METHODS, ConfigError, ExperimentConfig, ReportBundle, ablation_cells, check_loo_hygiene,
    emit_report, generate_library, load_library, load_report, plan_tasks, run_ablation,
    run_loo_experiment,
)
from perfint.harness.experiment import ABLATION_UNDEFINED, bootstrap_ci, target_mean
from perfint.harness.library import load_datasets

SMALL = {
    "datasets": [
        {"synthetic": "blobs", "params": {"n_rows": 240, "n_features": 4, "n_classes": 2, "spread": 2.5,
                                          "seed": s, "name": f"b{s}"}}
        for s in (1, 2, 3)
    ],
    "linear_skew": {"R": [0, 50, 100], "seeds": 2, "n_features": 1, "batch_size": 10},
    "base_kinds": ["random_forest"],
    "predictor_kinds": ["meta_model", "confidence"],
    "alphas": [0.9],
    "models": {"base_rf_trees": 20, "proxy_hpo_iter": 1, "drift_rf_trees": 20, "bootstrap_resamples": 200,
               "predictor": {"hpo_iter": 1}},
    "um": {"n_members": 3, "min_scenarios": 5, "params": {"n_estimators": 30}},
    "ci_resamples": 200,
    "master_seed": 4,
}


@pytest.fixture(scope="module")
def config():
    return ExperimentConfig.from_dict(SMALL)


@pytest.fixture(scope="module")
def lib_dir(tmp_path_factory, config):
    out = tmp_path_factory.mktemp("lib")
    generate_library(config, out)
    return out


@pytest.fixture(scope="module")
def library(lib_dir):
    return load_library(lib_dir)


@pytest.fixture(scope="module")
def bundle(library, config):
    return run_loo_experiment(library, config)


def test_task_arithmetic(config):
    d = dict(SMALL, linear_skew={"R": [0, 25, 50, 75, 100], "seeds": 2, "n_features": 1})
    cfg = ExperimentConfig.from_dict(d)
    tasks = plan_tasks(cfg, load_datasets(cfg))
    assert len(tasks) == 3 * 1 * 5 * 2 * 1
    d = dict(SMALL, linear_skew={"R": list(range(0, 101, 7))[:15], "seeds": 5, "n_features": 2},
             base_kinds=["random_forest", "logistic"])
    cfg = ExperimentConfig.from_dict(d)
    per_ds = [t for t in plan_tasks(cfg, load_datasets(cfg)) if t["dataset_index"] == 0]
    assert len(per_ds) == 300


def test_nearest_neighbors_tasks():
    d = dict(SMALL, nearest_neighbors={"count": 4}, eval_generator="nearest_neighbors")
    cfg = ExperimentConfig.from_dict(d)
    tasks = [t for t in plan_tasks(cfg, load_datasets(cfg)) if t["generator"] == "nearest_neighbors"]
    assert len(tasks) == 12
    assert all(0.5 <= t["drift"]["p_down"] <= 0.7 for t in tasks)


def test_library_contents(library):
    assert len(library.scenario_ids()) == 18
    assert len(library.records) == 36 and not library.failures
    assert library.datasets == ["b1", "b2", "b3"]
    for r in library.records:
        assert r.features.shape == (76,)
        assert r.delta == pytest.approx(abs(r.true_prod_accuracy - r.predicted_prod_accuracy))
        assert (r.intrinsic_width is None) == (r.predictor_kind == "meta_model")


def test_library_files(lib_dir):
    files = {p.name for p in lib_dir.iterdir()}
    assert {"index.json", "schema.json", "features_meta_model.csv", "features_confidence.csv"} <= files
    head = (lib_dir / "features_meta_model.csv").read_text().splitlines()[:2]
    assert head[0].startswith("# schema:") and len(head[1].split(",")) == 79


def test_library_deterministic(tmp_path, config, lib_dir):
    generate_library(config, tmp_path, jobs=2)
    for name in ("index.json", "features_meta_model.csv", "features_confidence.csv"):
        assert (tmp_path / name).read_bytes() == (lib_dir / name).read_bytes()


def test_load_library_errors(tmp_path, lib_dir):
    with pytest.raises(ConfigError):
        load_library(tmp_path)
    bad = tmp_path / "bad"
    shutil.copytree(lib_dir, bad)
    idx = json.loads((bad / "index.json").read_text())
    idx["schema_version"] = "other/0"
    (bad / "index.json").write_text(json.dumps(idx))
    with pytest.raises(ConfigError):
        load_library(bad)


def test_loo_hygiene(bundle, library):
    assert check_loo_hygiene(bundle, library)
    prov = bundle.metadata["um_provenance"]
    assert set(prov) == {f"{k}/0.9/{t}" for k in ("meta_model", "confidence") for t in ("b1", "b2", "b3")}
    # tamper: a target scenario in training must be detected
    key = "meta_model/0.9/b1"
    b1 = next(r.id for r in library.records if r.dataset == "b1")
    bad = ReportBundle(bundle.costs, bundle.scenarios, {"um_provenance": {key: {"train_ids": [b1]}}})
    assert not check_loo_hygiene(bad, library)


def test_cost_rows(bundle):
    assert len(bundle.costs) == len(METHODS) * 2 * 1
    na = {(c.method, c.predictor) for c in bundle.costs if c.mean_cost is None}
    assert na == {("I", "meta_model"), ("I_TL", "meta_model")}
    for c in bundle.costs:
        if c.mean_cost is not None:
            assert c.ci_low <= c.mean_cost <= c.ci_high
    avg = {(a["method"], a["alpha"]): a for a in bundle.metadata["predictor_average"]}
    assert avg[("I", 0.9)]["n_predictors"] == 1 and avg[("UM", 0.9)]["n_predictors"] == 2


def test_se_baseline_definition(library, bundle):
    r = next(x for x in library.records if x.predictor_kind == "confidence")
    row = next(s for s in bundle.scenarios if s.id == r.id and s.method == "SE" and s.predictor == "confidence")
    assert row.width == pytest.approx(1.6448536269514722 * r.se_width)


def test_paired_scenarios(bundle):
    ids = {}
    for s in bundle.scenarios:
        ids.setdefault((s.method, s.predictor), set()).add(s.id)
    for p in ("meta_model", "confidence"):
        sets = [v for (m, q), v in ids.items() if q == p]
        assert all(s == sets[0] for s in sets)


def test_report_round_trip_and_recompute(tmp_path, bundle):
    emit_report(bundle, tmp_path)
    assert load_report(tmp_path) == bundle
    with open(tmp_path / "costs.csv") as fh:
        costs = list(csv.DictReader(fh))
    assert len(costs) == len(bundle.costs)
    with open(tmp_path / "scenarios.csv") as fh:
        rows = list(csv.DictReader(fh))
    for c in costs:
        sel = [r for r in rows if r["method"] == c["method"] and r["predictor"] == c["predictor"]]
        if c["mean_cost"] == "NA":
            assert not sel
            continue
        m = target_mean([float(r["cost"]) for r in sel], [r["dataset"] for r in sel])
        assert m == pytest.approx(float(c["mean_cost"]), abs=1e-9)
        for r in sel:
            assert float(r["upper"]) - float(r["predicted_accuracy"]) == pytest.approx(float(r["width"]))


def test_emit_report_unwritable(tmp_path, bundle):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(bundle, blocker / "sub")


def test_target_mean_and_ci():
    v = [1.0, 1.0, 1.0, 4.0]
    g = ["a", "a", "a", "b"]
    assert target_mean(v, g) == 2.5
    lo, hi = bootstrap_ci(v, g, 500, 0)
    assert lo == hi == 2.5


def test_ablation_layout():
    cells = {(r, c) for r, c, _ in ablation_cells()}
    assert len(cells) == 25 - len(ABLATION_UNDEFINED)
    assert not cells & ABLATION_UNDEFINED


def test_ablation_run(library, config):
    grid = run_ablation(library, config, "meta_model", 0.9, mask=[("Distance", "Base")])
    assert grid["grid"]["All"]["All"]["normalized"] == 1.0
    assert set(grid["grid"]) == {"All", "Distance"}
    with pytest.raises(ConfigError):
        run_ablation(library, config, "meta_model", 0.9, mask=[("Prediction", "Base")])


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SMALL, "bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SMALL, "alphas": [1.2]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SMALL, "datasets": SMALL["datasets"][:1]})
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")


def test_cli_errors(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config_error"
    assert main(["report", "--input", str(tmp_path / "nothing"), "--out", str(tmp_path)]) == 1
    assert "error" in json.loads(capsys.readouterr().err)


def test_cli_round(tmp_path, lib_dir, capsys):
    out = tmp_path / "um"
    assert main(["train-um", "--library", str(lib_dir), "--exclude", "b1", "--out", str(out)]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["n_train"] == 10 and (out / "um.json").exists()
    ev = tmp_path / "ev"
    assert main(["evaluate", "--library", str(lib_dir), "--out", str(ev)]) == 0
    capsys.readouterr()
    re_out = tmp_path / "re"
    assert main(["report", "--input", str(ev), "--out", str(re_out), "--format", "csv"]) == 0
    assert (re_out / "costs.csv").read_bytes() == (ev / "costs.csv").read_bytes()


def test_cli_simulate(tmp_path, capsys):
    cfg = dict(SMALL, linear_skew={"R": [50], "seeds": 1, "n_features": 1, "batch_size": 10})
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "lib"), "--seed", "9"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["scenarios"] == 3
    assert json.loads((tmp_path / "lib" / "index.json").read_text())["config"]["master_seed"] == 9
