import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perfint.drift import LinearSkewConfig, linear_skew
from perfint.learners.isotonic import pava
from perfint.predictors import (
    ConfidencePredictor, MetaFeatureTransformer, MetaModelPredictor, PredictorSettings, bernoulli_se, calibrate_confidences,
    calibration_targets, confidence_entropy, ensemble_whitebox, predictor_from_dict,
    stratified_holdout, top_confidence, top_margin,
)
from perfint.scenario import build_context, scenario_for_predictor
from perfint.tabular import Dataset, SplitTriple, make_blobs, random_split


def test_binary_meta_feature_arithmetic():
    P = np.array([[0.8, 0.2]])
    assert top_confidence(P)[0] == 0.8
    assert top_margin(P)[0] == pytest.approx(0.6, abs=1e-15)
    assert confidence_entropy(P)[0] == pytest.approx(0.5004024235, abs=1e-9)


@pytest.mark.parametrize("k", [2, 3, 7])
def test_uniform_entropy_is_log_k(k):
    assert confidence_entropy(np.full((1, k), 1 / k))[0] == pytest.approx(math.log(k))


def test_confidence_single_bin():
    P = np.column_stack([np.full(100, 0.95), np.full(100, 0.05)])
    correct = np.arange(100) < 90
    cp = ConfidencePredictor().fit(P, correct)
    pred = cp.predict(np.column_stack([np.full(7, 0.92), np.full(7, 0.08)]))
    assert np.allclose(pred.per_point_confidences, 0.9)
    assert pred.intrinsic_width == pytest.approx(3.0)


def test_confidence_empty_bin_fallback():
    P = np.array([[0.55, 0.45]] * 10 + [[0.95, 0.05]] * 10)
    correct = np.array([1] * 6 + [0] * 4 + [1] * 10, bool)
    cp = ConfidencePredictor().fit(P, correct)
    # 0.72 lands in the empty [0.7, 0.8) bin, nearest nonempty is [0.5, 0.6)
    assert cp.predict(np.array([[0.72, 0.28]])).per_point_confidences[0] == pytest.approx(0.6)
    assert cp.predict(np.array([[0.88, 0.12]])).per_point_confidences[0] == pytest.approx(1.0)


@pytest.mark.parametrize("a,n,u", [(0.5, 25, 0.1), (1.0, 40, 0.0), (0.9, 100, 0.03)])
def test_bernoulli_bin_width(a, n, u):
    assert bernoulli_se(a, n) == pytest.approx(u, abs=1e-15)


def test_calibrated_base_model_bins_converge():
    rng = np.random.default_rng(0)
    n = 4000
    conf = rng.uniform(0.5, 1.0, n)
    correct = rng.random(n) < conf
    cp = ConfidencePredictor().fit(np.column_stack([conf, 1 - conf]), correct)
    centers = (cp.edges[:-1] + cp.edges[1:]) / 2
    used = cp.counts_ > 0
    assert np.all(np.abs(cp.acc_[used] - centers[used]) < 0.05)
    prod = rng.uniform(0.5, 1.0, 2000)
    pred = cp.predict(np.column_stack([prod, 1 - prod]))
    assert abs(pred.predicted_accuracy - 100 * prod.mean()) < 2


def test_calibration_targets():
    c = np.array([True] * 98 + [False] * 3)
    t = calibration_targets(c)
    assert t[0] == pytest.approx(0.99)
    assert t[-1] == pytest.approx(1 / 5)


def test_calibration_degenerate_is_identity():
    m = calibrate_confidences([], [])
    assert m(np.array([0.3]))[0] == pytest.approx(0.3)
    m = calibrate_confidences([0.4], [True])
    assert m(np.array([0.7]))[0] == pytest.approx(0.7)


def test_isotonic_matches_pava_on_targets(rng):
    raw = rng.random(200)
    correct = rng.random(200) < raw
    m = calibrate_confidences(raw, correct)
    order = np.argsort(raw, kind="stable")
    expected = pava(calibration_targets(correct)[order])
    assert np.allclose(m(raw[order]), expected, atol=1e-9)


@given(st.integers(0, 10_000))
def test_calibration_monotone_and_bounded(seed):
    rng = np.random.default_rng(seed)
    raw = rng.random(60)
    m = calibrate_confidences(raw, rng.random(60) < raw)
    q = np.sort(rng.random(1000))
    out = m(q)
    assert np.all(np.diff(out) >= -1e-12)
    assert out.min() >= 0 and out.max() <= 1


def test_stratified_holdout_per_class():
    labels = np.array([0] * 50 + [1] * 30)
    fit, hold = stratified_holdout(labels, 0.2, 3)
    assert (labels[hold] == 0).sum() == 10 and (labels[hold] == 1).sum() == 6
    assert len(np.intersect1d(fit, hold)) == 0 and len(fit) + len(hold) == 80


def test_ensemble_whitebox_identical_members():
    m = np.tile(np.linspace(0.2, 0.9, 30), (10, 1))
    assert ensemble_whitebox(m) == pytest.approx((0.0, 0.0), abs=1e-12)


def _meta_data(seed=0, n=400):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, 12))
    p = 1 / (1 + np.exp(-2 * M[:, 0]))
    return M, rng.random(n) < p


def test_crossval_members_and_width():
    M, c = _meta_data()
    p = MetaModelPredictor("crossval", PredictorSettings(hpo_iter=1), 1).fit(M, c)
    assert len(p.members_) == 10
    pred = p.predict(meta_features=M[:50])
    members = np.vstack([m.predict_proba(M[:50])[:, 1] for m in p.members_])
    assert np.allclose(pred.raw_confidences, members.mean(axis=0))
    assert pred.intrinsic_width == pytest.approx(100 * members.std(axis=0).mean())


def test_meta_model_ensemble_is_member_mean():
    M, c = _meta_data(1)
    p = MetaModelPredictor("meta_model", PredictorSettings(hpo_iter=2), 2).fit(M, c)
    pred = p.predict(meta_features=M)
    assert len(p.members_) == 2
    assert np.allclose(pred.raw_confidences, p.member_confidences(M).mean(axis=0))
    assert pred.intrinsic_width is None
    assert pred.predicted_accuracy == pytest.approx(100 * pred.per_point_confidences.mean(), abs=1e-9)
    assert 0 <= pred.per_point_confidences.min() and pred.per_point_confidences.max() <= 1


def test_dropout_draws_seeded():
    M, c = _meta_data(2)
    p = MetaModelPredictor("dropout", PredictorSettings(hpo_iter=1), 3).fit(M, c)
    a = p.predict(meta_features=M[:40], seed=5)
    b = p.predict(meta_features=M[:40], seed=5)
    assert a.intrinsic_width == b.intrinsic_width and a.intrinsic_width >= 0
    assert a.member_confidences.shape == (10, 40)


@pytest.mark.parametrize("kind", ["meta_model", "crossval", "dropout"])
def test_degenerate_labels_constant(kind):
    M, _ = _meta_data(3, 50)
    p = MetaModelPredictor(kind, PredictorSettings(hpo_iter=1)).fit(M, np.ones(50, bool))
    pred = p.predict(meta_features=M)
    assert np.allclose(pred.per_point_confidences, 51 / 52)


@pytest.mark.parametrize("kind", ["confidence", "meta_model", "crossval", "dropout"])
def test_serialization_round_trip(kind, blobs, fast_settings):
    ctx = build_context(blobs, random_split(blobs.n_rows, .4, .3, .3, 1), "random_forest", 4, fast_settings)
    sc = scenario_for_predictor(ctx, kind)
    p2 = predictor_from_dict(json.loads(json.dumps(sc.predictor.to_dict())))
    pred = p2.predict(ctx.base_proba_prod, ctx.meta_prod, seed=0)
    ref = sc.predictor.predict(ctx.base_proba_prod, ctx.meta_prod, seed=0)
    assert np.allclose(pred.per_point_confidences, ref.per_point_confidences)
    assert pred.intrinsic_width == ref.intrinsic_width


def test_duplicate_train_point_outlier_zero(blobs, fast_settings):
    sp = random_split(blobs.n_rows, .4, .3, .3, 2)
    ctx = build_context(blobs, sp, "random_forest", 1, fast_settings)
    X_train = np.vstack([blobs.X[sp.train], np.repeat(blobs.X[sp.train[:1]], 9, axis=0)])
    y_train = np.concatenate([blobs.y[sp.train], np.repeat(blobs.y[sp.train[:1]], 9)])
    t = MetaFeatureTransformer(ctx.base, ctx.proxies, ctx.preprocessor).fit(
        X_train, y_train, blobs.X[sp.test], blobs.n_classes)
    M = t.transform(blobs.X[sp.train[:2]])
    assert M.shape == (2, 12)
    assert M[0, 10] == pytest.approx(0.0, abs=1e-12)  # ten identical training rows
    assert M[1, 10] > 0
    assert np.all((M[:, 3] >= 0) & (M[:, 3] <= 1)) and np.all(M[:, 2] >= 0)


def test_easy_blobs_high_prediction(easy_blobs, fast_settings):
    ctx = build_context(easy_blobs, random_split(easy_blobs.n_rows, .4, .3, .3, 0), "random_forest",
                        0, fast_settings)
    assert ctx.true_prod_accuracy >= 99
    assert scenario_for_predictor(ctx, "meta_model").predicted_prod_accuracy >= 95


def test_prod_copy_of_test_close(blobs, fast_settings):
    sp = random_split(blobs.n_rows, .5, .5, 0.0, 0)
    n = blobs.n_rows
    ds = Dataset(np.vstack([blobs.X, blobs.X[sp.test]]), np.concatenate([blobs.y, blobs.y[sp.test]]),
                 blobs.columns, blobs.classes, id="copy")
    prod = np.arange(n, n + len(sp.test))
    ctx = build_context(ds, SplitTriple(sp.train, sp.test, prod), "random_forest", 0, fast_settings)
    # the binning predictor reproduces the test accuracy exactly on a copy of test
    assert scenario_for_predictor(ctx, "confidence").delta == pytest.approx(0.0, abs=1e-9)
    assert scenario_for_predictor(ctx, "meta_model").delta < 5


@pytest.mark.slow
def test_in_distribution_fidelity(fast_settings):
    ds = make_blobs(1500, 5, 3, spread=2.0, seed=8)
    errs = []
    for s in range(20):
        sp = linear_skew(ds, LinearSkewConfig(0, 50, .35, .35, .3), s)
        ctx = build_context(ds, sp, "random_forest", s, fast_settings)
        errs.append(scenario_for_predictor(ctx, "meta_model").delta)
    assert np.median(errs) < 3
