"""Acceptance suite: one test per criterion, named test_criterion_NN_<name>.

The terminal summary prints a PASS/FAIL line per criterion. Criteria 10-12
share session-scoped desk runs (5 master seeds plus a repeat of seed 0).
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from perfint.drift import (
    LinearSkewConfig, NearestNeighborsConfig, bucket_split, linear_skew, nearest_neighbors_drift,
)
from perfint.features import mass_distances
from perfint.harness import (
    ExperimentConfig, emit_report, generate_library, run_ablation, run_loo_experiment,
)
from perfint.harness.experiment import ABLATION_COLS, ABLATION_UNDEFINED
from perfint.learners.isotonic import fit_isotonic
from perfint.predictors import ConfidencePredictor, calibration_targets
from perfint.tabular import distance_matrix_features, make_blobs
from perfint.uncertainty import cost_terms, tl_calibrate, train_um, z_scale

DESK_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "desk.json"
DESK_SEEDS = (0, 1, 2, 3, 4)
DESK_LIMIT_S = 600


# ----------------------------------------------------------------- oracles


def literal_cost(d, u, a):
    if d > u:
        return a * (d - u)
    return (1 - a) * (u - d)


def minmax_isotonic(y):
    """Isotonic fit via the min-max formula: x_i = min_{j>=i} max_{k<=i} mean(y[k..j])."""
    n = len(y)
    c = np.concatenate([[0.0], np.cumsum(y)])
    out = np.empty(n)
    for i in range(n):
        out[i] = min(max((c[j + 1] - c[k]) / (j + 1 - k) for k in range(i + 1)) for j in range(i, n))
    return out


# ---------------------------------------------------------------- criteria


def test_criterion_01_cost_brute_force():
    rng = np.random.default_rng(0)
    d = rng.uniform(0, 100, 10_000)
    u = rng.uniform(0, 100, 10_000)
    a = rng.uniform(0, 1, 10_000)
    t = time.perf_counter()
    got = np.concatenate([cost_terms(d[i:i + 1], u[i:i + 1], a[i]) for i in range(10_000)])
    assert time.perf_counter() - t < 1.0
    ref = np.array([literal_cost(*x) for x in zip(d, u, a)])
    assert np.max(np.abs(got - ref)) <= 1e-12


def test_criterion_02_distance_metrics():
    assert mass_distances([0.2, 0.5, 0.3], [0.2, 0.5, 0.3]) == (0.0, 0.0, 0.0)
    assert mass_distances([1, 0], [0, 1]) == (1.0, 1.0, 1.0)
    assert mass_distances([0.5, 0.5], [0.25, 0.75]) == (0.25, 0.25, 0.0625)
    rng = np.random.default_rng(1)
    for _ in range(1000):
        k = int(rng.integers(2, 20))
        p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        a, b = mass_distances(p, q), mass_distances(q, p)
        assert abs(a[0] - b[0]) <= 1e-12 and abs(a[1] - b[1]) <= 1e-12


def test_criterion_03_linear_skew_law():
    ds = make_blobs(2000, 3, 2, seed=0)
    A = set(bucket_split(ds.X[:, 0])[0].tolist())
    t = time.perf_counter()
    for R in (0, 25, 50, 75, 100):
        tt_frac, pr_frac = [], []
        for seed in range(200):
            sp = linear_skew(ds, LinearSkewConfig(0, R, .35, .35, .3), seed)
            tt = np.concatenate([sp.train, sp.test])
            in_a_tt = np.fromiter((i in A for i in tt.tolist()), bool)
            in_a_pr = np.fromiter((i in A for i in sp.prod.tolist()), bool)
            tt_frac.append(in_a_tt.mean())
            pr_frac.append(in_a_pr.mean())
            if R in (0, 100):
                # disjoint bucket usage: train/test from one bucket, prod from the other
                assert len(set(np.unique(in_a_tt)) & set(np.unique(in_a_pr))) == 0
        assert abs(np.mean(tt_frac) - R / 100) <= 0.02, (R, np.mean(tt_frac))
        assert abs(np.mean(pr_frac) - (1 - R / 100)) <= 0.02, (R, np.mean(pr_frac))
    assert time.perf_counter() - t < 30


def test_criterion_04_nearest_neighbors_conservation():
    ds = make_blobs(500, 4, 3, seed=2)
    Z = distance_matrix_features(ds)
    for seed in range(100):
        p_down = 0.5 + 0.2 * (seed % 5) / 4
        _, tr = nearest_neighbors_drift(ds, NearestNeighborsConfig(.35, .35, .3, p_near=1.0, p_down=p_down),
                                        seed, return_trace=True)
        n_down = len(tr.removed) + len(tr.kept)
        assert len(tr.removed) == math.floor(p_down * n_down)
        dist = lambda rows: np.linalg.norm(Z[rows] - Z[tr.anchor], axis=1).mean()  # noqa: E731
        survivors = tr.kept[tr.kept != tr.anchor]
        assert dist(tr.removed) < dist(survivors)


@pytest.mark.parametrize("a,n,u", [(0.5, 25, 0.1), (1.0, 40, 0.0), (0.9, 100, 0.03)])
def test_criterion_05_confidence_intrinsic_width(a, n, u):
    # set a_k and n_k directly: a_k * n_k need not be an integer count
    counts, acc = [0] * 10, [0.0] * 10
    counts[9], acc[9] = n, a
    cp = ConfidencePredictor.from_dict({"kind": "confidence", "counts": counts, "acc": acc,
                                        "lookup": [9] * 10})
    assert cp.bin_uncertainty()[9] == pytest.approx(u, abs=1e-15)
    P = np.array([[0.97, 0.03], [0.3, 0.7]])
    assert cp.predict(P).intrinsic_width == pytest.approx(100 * u, abs=1e-12)


def test_criterion_05_confidence_intrinsic_width_from_counts():
    P = np.column_stack([np.full(100, 0.95), np.full(100, 0.05)])
    cp = ConfidencePredictor().fit(P, np.arange(100) < 90)
    assert cp.bin_uncertainty()[9] == pytest.approx(0.03, abs=1e-15)


def test_criterion_06_quantile_gbt_coverage():
    rng = np.random.default_rng(6)

    def draw(n):
        X = rng.uniform(-2, 2, size=(n, 3))
        return X, np.abs(rng.normal(0, 0.5 + np.abs(X[:, 0]), n))

    X, y = draw(1000)
    Xn, yn = draw(1000)
    t = time.perf_counter()
    for tau in (0.5, 0.9):
        um = train_um(X, y, tau, seed=1, feature_names=list("abc"))
        assert abs(np.mean(y <= um.predict(X)) - tau) <= 0.05
        assert abs(np.mean(yn <= um.predict(Xn)) - tau) <= 0.05
    assert time.perf_counter() - t < 60


def test_criterion_07_z_calibration():
    assert abs(z_scale(0.95) - 1.96) <= 0.01


def test_criterion_08_tl_grid_oracle():
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = int(rng.integers(1, 25))
        u = rng.uniform(0.2, 3.0, n)
        d = rng.exponential(2.0, n)
        alpha = float(rng.uniform(0.05, 0.95))
        s = tl_calibrate(u, d, alpha)
        grid = np.arange(0.0, float((d / u).max()) + 1.0, 1e-4)
        costs = (alpha * np.maximum(d - grid[:, None] * u, 0)
                 + (1 - alpha) * np.maximum(grid[:, None] * u - d, 0)).sum(axis=1)
        s_grid = grid[np.nonzero(costs <= costs.min() + 1e-9)[0][0]]
        assert abs(s - s_grid) <= 1e-3
        c = float(rng.uniform(0.1, 10))
        assert tl_calibrate(c * u, d, alpha) == pytest.approx(s / c, rel=1e-9, abs=1e-12)


def test_criterion_09_isotonic_calibration():
    rng = np.random.default_rng(9)
    for _ in range(200):
        n = int(rng.integers(2, 40))
        x = rng.random(n)
        y = rng.random(n)
        m = fit_isotonic(x, y)
        order = np.argsort(x)
        assert np.max(np.abs(m(x[order]) - minmax_isotonic(y[order]))) <= 1e-9
    assert calibration_targets(np.array([True] * 98 + [False] * 2))[0] == 0.99


# ----------------------------------------------------------- desk runs


def _desk_run(seed, out):
    cfg = ExperimentConfig.load(DESK_CONFIG)
    cfg.master_seed = seed
    t = time.perf_counter()
    lib = generate_library(cfg, out / "library")
    bundle = run_loo_experiment(lib, cfg)
    emit_report(bundle, out)
    return {"config": cfg, "library": lib, "bundle": bundle, "seconds": time.perf_counter() - t,
            "costs_csv": (out / "costs.csv").read_bytes()}


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    return {s: _desk_run(s, root / f"seed{s}") for s in DESK_SEEDS}


@pytest.fixture(scope="session")
def desk_repeat(tmp_path_factory):
    return _desk_run(0, tmp_path_factory.mktemp("desk_repeat"))


def test_criterion_10_desk_directional(desk_runs):
    um_wins = tl_wins_se = tl_wins_bs = 0
    for seed, run in desk_runs.items():
        assert run["seconds"] < DESK_LIMIT_S
        b = run["bundle"]
        c = {m: b.cost(m, "meta_model", 0.9) for m in ("SE", "BS", "SE_TL", "BS_TL", "UM")}
        print(f"seed {seed}: " + " ".join(f"{k}={v:.3f}" for k, v in c.items()))
        um_wins += c["UM"] < c["SE"]
        tl_wins_se += c["SE_TL"] < c["SE"]
        tl_wins_bs += c["BS_TL"] < c["BS"]
    n = len(desk_runs)
    assert um_wins >= 4
    assert tl_wins_se > n / 2 and tl_wins_bs > n / 2


def test_criterion_11_ablation_grid(desk_runs):
    run = desk_runs[0]
    grid = run_ablation(run["library"], run["config"], "meta_model", 0.9)
    g = grid["grid"]
    assert g["All"]["All"]["normalized"] == 1.0
    for row in ("Distance", "Internal", "Prediction", "Noise"):
        for col in ABLATION_COLS:
            if (row, col) in ABLATION_UNDEFINED:
                assert col not in g.get(row, {})
            else:
                assert col in g[row]


def test_criterion_12_determinism(desk_runs, desk_repeat):
    assert desk_repeat["costs_csv"] == desk_runs[0]["costs_csv"]


# ------------------------------------------------- supporting desk checks


@pytest.mark.xfail(strict=True, reason=(
    "not reproduced at desk scale: Drift-only UM cost <= Proxy-only in 2 of 5 seeds; "
    "analysis in the decisions ledger"))
def test_desk_drift_column_beats_proxy_column(desk_runs):
    wins = 0
    for run in desk_runs.values():
        g = run_ablation(run["library"], run["config"], "meta_model", 0.9,
                         mask=[("All", "Drift"), ("All", "Proxy")])["grid"]["All"]
        print(f"drift={g['Drift']['cost']:.3f} proxy={g['Proxy']['cost']:.3f}")
        wins += g["Drift"]["cost"] <= g["Proxy"]["cost"]
    assert wins > len(desk_runs) / 2
