"""Shared learner plumbing: seeding, fit checks and the JSON model format."""

from __future__ import annotations

import json
import zlib

import numpy as np

MODEL_FORMAT = "perfint-model"
MODEL_VERSION = 1

_REGISTRY: dict[str, type] = {}


class NotFittedError(RuntimeError):
    pass


def check_seed(seed) -> int:
    if seed is None:
        return 0
    return int(seed) % (2**63)


def derive_seed(master, *keys) -> int:
    """Stable child seed from a master seed and arbitrary (str/int/float) keys."""
    words = [check_seed(master) % (2**32)]
    for k in keys:
        if isinstance(k, str):
            words.append(zlib.crc32(k.encode()))
        elif isinstance(k, float):
            words.append(zlib.crc32(("f:" + repr(k)).encode()))
        else:
            words.append(int(k) % (2**32))
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0] % (2**62))


def derive_seeds(master, n: int) -> list[int]:
    ss = np.random.SeedSequence(check_seed(master) % (2**63))
    return [int(s) % (2**62) for s in ss.generate_state(n, np.uint64)]


class Learner:
    """Minimal estimator interface shared by every in-repo model."""

    kind = "learner"

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        _REGISTRY[cls.kind] = cls

    def _check_fitted(self, attr):
        if not hasattr(self, attr):
            raise NotFittedError(f"{type(self).__name__} is not fitted")

    def predict(self, X):
        return np.asarray(self.predict_proba(X)).argmax(axis=1)

    def get_params(self) -> dict:
        raise NotImplementedError

    def set_params(self, **params):
        for k, v in params.items():
            if not hasattr(self, k):
                raise ValueError(f"unknown parameter {k!r} for {type(self).__name__}")
            setattr(self, k, v)
        return self

    def clone(self, **overrides):
        p = self.get_params()
        p.update(overrides)
        return type(self)(**p)

    def _state(self) -> dict:
        raise NotImplementedError

    def _load_state(self, state: dict):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "params": self.get_params(),
            "state": self._state(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def learner_from_dict(d: dict) -> Learner:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a perfint model document")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')!r}")
    cls = _REGISTRY[d["kind"]]
    obj = cls(**d["params"])
    obj._load_state(d["state"])
    return obj


def learner_from_json(text: str) -> Learner:
    return learner_from_dict(json.loads(text))
