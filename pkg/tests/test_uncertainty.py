import json
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perfint.features import FEATURE_NAMES
from perfint.uncertainty import (
    CostReport, PredictionInterval, UncertaintyModel, build_um_pipeline, calibrate_interval, cost,
    cost_terms, mean_cost, predict_interval, split_80_20, tl_calibrate, train_um, z_scale,
)


def reference_cost(d, u, a):
    total = 0.0
    for di, ui in zip(d, u):
        if di > ui:
            total += a * (di - ui)
        else:
            total += (1 - a) * (ui - di)
    return total


def test_cost_examples():
    assert cost([3.0, 7.0], [3.0, 7.0], 0.9) == 0.0
    assert cost([5.0], [3.0], 0.9) == pytest.approx(1.8)
    assert mean_cost([5.0, 1.0], [3.0, 2.0], 0.9) == pytest.approx((1.8 + 0.1) / 2)
    r = CostReport(0.9, "x", np.array([5.0]), np.array([3.0]))
    assert r.total == pytest.approx(1.8) and r.mean == pytest.approx(1.8)


def test_cost_validation():
    with pytest.raises(ValueError):
        cost_terms([1.0, 2.0], [1.0], 0.9)
    with pytest.raises(ValueError):
        cost_terms([1.0], [1.0], 1.5)


@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), min_size=1, max_size=30),
       st.floats(0, 1))
def test_cost_matches_reference(pairs, a):
    d, u = map(np.array, zip(*pairs))
    assert cost(d, u, a) == pytest.approx(reference_cost(d, u, a), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("alpha,z,tol", [(0.95, 1.96, 0.01), (0.6827, 1.0, 1e-3), (0.5, 0.674, 1e-3)])
def test_z_scale(alpha, z, tol):
    assert z_scale(alpha) == pytest.approx(z, abs=tol)


def test_tl_single_scenario():
    assert tl_calibrate([2.0], [4.0], 0.5) == pytest.approx(2.0)


def test_tl_all_zero_widths():
    assert tl_calibrate([0.0, 0.0], [1.0, 2.0], 0.9) == 0.0


def test_tl_grid_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = rng.uniform(0.1, 3, 25)
        d = rng.exponential(2, 25)
        s = tl_calibrate(u, d, 0.8)
        grid = np.arange(0, 20, 1e-3)
        gc = [cost(d, g * u, 0.8) for g in grid]
        assert cost(d, s * u, 0.8) <= min(gc) + 1e-9


@given(st.integers(0, 2**31), st.floats(0.05, 20))
def test_tl_homogeneity_and_optimality(seed, c):
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.1, 5, 15)
    d = rng.exponential(3, 15)
    a = float(rng.uniform(0.05, 0.95))
    s = tl_calibrate(u, d, a)
    assert tl_calibrate(c * u, d, a) == pytest.approx(s / c, rel=1e-9, abs=1e-12)
    best = cost(d, s * u, a)
    for t in rng.uniform(0, 3 * s + 1, 200):
        assert best <= cost(d, t * u, a) + 1e-9
    assert best <= cost(d, 0 * u, a) + 1e-12


def test_calibrate_interval_methods():
    assert calibrate_interval(2.0, "target_z", alpha=0.95).calibrated_width == pytest.approx(2 * 1.959964)
    assert calibrate_interval(2.0, "tl_constant", scale=1.5).calibrated_width == 3.0
    assert calibrate_interval(2.0, "none").calibrated_width == 2.0
    with pytest.raises(ValueError):
        calibrate_interval(2.0, "tl_constant")
    with pytest.raises(ValueError):
        PredictionInterval(-1.0, 0.0)


class _Const:
    def __init__(self, v):
        self.v = v

    def predict(self, X):
        return np.full(len(X), self.v, dtype=float)


def test_um_mean_and_clamp():
    names = ("a", "b")
    um = UncertaintyModel([_Const(v) for v in range(1, 11)], 0.9, "meta_model", names)
    pi = predict_interval(um, {"a": 0.0, "b": 1.0})
    assert pi.raw_width == 5.5
    neg = UncertaintyModel([_Const(-3.0), _Const(1.0)], 0.9, "meta_model", names)
    assert neg.predict(np.zeros((2, 2))).tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        um.predict({"a": 1.0, "c": 2.0})
    with pytest.raises(ValueError):
        um.predict(np.zeros((1, 3)))


def test_um_members_and_constant_target():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(120, 5))
    um = train_um(X, np.full(120, 4.0), 0.9, seed=3, feature_names=list("abcde"))
    assert len(um.members) == 10
    assert np.all(np.abs(um.predict(X) - 4.0) < 0.1)


def test_um_quantile_with_uninformative_features():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(600, 4))
    d = rng.uniform(0, 10, 600)
    um = train_um(X, d, 0.9, seed=0, feature_names=list("abcd"), params={"n_estimators": 100})
    cover = np.mean(d <= um.predict(X))
    assert abs(cover - 0.9) < 0.07
    Xn = rng.normal(size=(200, 4))
    assert abs(np.median(um.predict(Xn)) - 9.0) < 1.0


def test_um_errors():
    X = np.zeros((10, 2))
    with pytest.raises(ValueError):
        train_um(X, np.ones(10), 0.9, feature_names=["a", "b"])
    with pytest.raises(ValueError):
        train_um(np.zeros((60, 2)), -np.ones(60), 0.9, feature_names=["a", "b"])


def test_um_round_trip_and_schema():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 76))
    um = train_um(X, rng.exponential(2, 60), 0.8, seed=1, params={"n_estimators": 20})
    assert um.feature_names == FEATURE_NAMES
    um2 = UncertaintyModel.from_dict(json.loads(json.dumps(um.to_dict())))
    assert np.array_equal(um.predict(X), um2.predict(X))
    assert np.array_equal(um.predict(X), um.predict(X))


def test_split_80_20():
    tr, cal = split_80_20(100, 5)
    assert len(tr) == 80 and len(cal) == 20
    assert len(np.union1d(tr, cal)) == 100
    assert np.array_equal(split_80_20(100, 5)[1], cal)


def _synthetic_library(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 6))
    scale = np.exp(X[:, 0])          # learnable drift signal
    d = np.abs(rng.normal(0, scale))
    return X, d


def test_pipeline_deterministic_and_beats_constant():
    X, d = _synthetic_library(400, 0)
    names = [f"f{i}" for i in range(6)]
    um, s = build_um_pipeline(X, d, "meta_model", 0.9, 11, feature_names=names)
    um2, s2 = build_um_pipeline(X, d, "meta_model", 0.9, 11, feature_names=names)
    assert s == s2 and len(um.provenance["train_ids"]) == 320
    Xt, dt = _synthetic_library(400, 1)
    assert np.array_equal(um.predict(Xt), um2.predict(Xt))
    um_cost = mean_cost(dt, s * um.predict(Xt), 0.9)
    const = np.full(len(dt), z_scale(0.9) * d.std())
    assert um_cost < mean_cost(dt, const, 0.9)


def test_cost_speed():
    rng = np.random.default_rng(0)
    d, u, a = rng.uniform(0, 50, 10_000), rng.uniform(0, 50, 10_000), rng.uniform(0, 1, 10_000)
    t = time.perf_counter()
    got = np.array([cost_terms(d[i:i + 1], u[i:i + 1], a[i])[0] for i in range(10_000)])
    assert time.perf_counter() - t < 1.0
    assert np.max(np.abs(got - [reference_cost([x], [y], z) for x, y, z in zip(d, u, a)])) <= 1e-12
