import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from perfint.predictors import PredictorSettings
from perfint.scenario import ModelSettings
from perfint.tabular import make_blobs

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def blobs():
    return make_blobs(600, 6, 3, spread=2.0, seed=3)


@pytest.fixture(scope="session")
def easy_blobs():
    return make_blobs(600, 4, 2, spread=0.4, seed=5, name="easy")


@pytest.fixture(scope="session")
def fast_settings():
    return ModelSettings(base_rf_trees=30, proxy_hpo_iter=1, drift_rf_trees=20,
                         predictor=PredictorSettings(hpo_iter=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    status = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_([a-z0-9_]+?)(?:_from_counts)?(?:\[|$)",
                          getattr(rep, "nodeid", ""))
            if not m or (outcome == "passed" and rep.when != "call"):
                continue
            key = (int(m.group(1)), m.group(2))
            ok = outcome == "passed"
            status[key] = status.get(key, True) and ok
    if status:
        terminalreporter.section("acceptance criteria")
        for (n, name), ok in sorted(status.items()):
            terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {name.replace('_', ' ')}")
