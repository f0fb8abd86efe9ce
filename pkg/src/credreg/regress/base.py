"""Model specifications and the common fitted-model interface."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Mapping

import numpy as np

from ..errors import ConfigError, EmptyInputError, FeatureSetMismatch
from ..features import FeatureMatrix, FeatureSet, FeatureVector

# display order of the result tables
ALGORITHMS = (
    "ZeroR",
    "REPTree",
    "LinearRegression",
    "IBk",
    "LWL",
    "AdditiveRegression",
    "RegressionByDiscretization",
    "DecisionStump",
    "GaussianProcesses",
    "SMOreg",
    "RandomForest",
)


def _pos_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool) and v >= 1


def _int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _pos_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v > 0


def _nonneg_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v >= 0


def _unit_real(v):
    return _nonneg_real(v) and v <= 1


def _bool(v):
    return isinstance(v, bool)


def _opt(check):
    return lambda v: v is None or check(v)


@dataclass(frozen=True)
class _Algo:
    defaults: Mapping[str, Any]
    checks: Mapping[str, Callable[[Any], bool]]
    stochastic: Callable[[Mapping[str, Any]], bool] = lambda hp: False


HYPERPARAMETERS: dict[str, _Algo] = {
    "ZeroR": _Algo({}, {}),
    "LinearRegression": _Algo({"ridge": 1e-8}, {"ridge": _nonneg_real}),
    "IBk": _Algo({"k": 1}, {"k": _pos_int}),
    "LWL": _Algo({}, {}),
    "AdditiveRegression": _Algo(
        {"iterations": 10, "shrinkage": 1.0},
        {"iterations": lambda v: _int(v) and v >= 0, "shrinkage": _unit_real},
    ),
    "RegressionByDiscretization": _Algo(
        {"bins": 10, "min_leaf": 2}, {"bins": _pos_int, "min_leaf": _pos_int}
    ),
    "DecisionStump": _Algo({}, {}),
    "GaussianProcesses": _Algo(
        {"gamma": None, "noise": 1.0}, {"gamma": _opt(_pos_real), "noise": _pos_real}
    ),
    "SMOreg": _Algo(
        {"C": 1.0, "epsilon": 1e-3, "tolerance": 1e-3, "max_iter": 1_000_000},
        {"C": _pos_real, "epsilon": _nonneg_real, "tolerance": _pos_real, "max_iter": _pos_int},
    ),
    "REPTree": _Algo(
        {"min_leaf": 2, "max_depth": -1, "prune": True, "holdout": 0.25},
        {
            "min_leaf": _pos_int,
            "max_depth": lambda v: _int(v) and v >= -1,
            "prune": _bool,
            "holdout": lambda v: _nonneg_real(v) and v < 1,
        },
        stochastic=lambda hp: hp["prune"],
    ),
    "RandomForest": _Algo(
        {"trees": 100, "features_per_split": None, "bootstrap": True, "min_leaf": 1, "max_depth": -1},
        {
            "trees": _pos_int,
            "features_per_split": _opt(_pos_int),
            "bootstrap": _bool,
            "min_leaf": _pos_int,
            "max_depth": lambda v: _int(v) and v >= -1,
        },
        stochastic=lambda hp: True,
    ),
}


@dataclass(frozen=True)
class ModelSpec:
    """Algorithm name plus validated hyperparameters.

    Unknown names, unknown hyperparameters and out-of-range values raise
    :class:`ConfigError` at construction; missing hyperparameters take defaults.
    """

    algorithm: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        algo = HYPERPARAMETERS.get(self.algorithm)
        if algo is None:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        hp = dict(algo.defaults)
        for key, value in dict(self.hyperparameters).items():
            if key not in algo.checks:
                raise ConfigError(f"{self.algorithm} has no hyperparameter {key!r}")
            if isinstance(value, float) and _int(algo.defaults[key]) and value == int(value):
                value = int(value)
            if not algo.checks[key](value):
                raise ConfigError(f"invalid value {value!r} for {self.algorithm}.{key}")
            hp[key] = value
        object.__setattr__(self, "hyperparameters", MappingProxyType(hp))
        if self.seed is not None and (not _int(self.seed) or self.seed < 0):
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")

    @property
    def stochastic(self) -> bool:
        return HYPERPARAMETERS[self.algorithm].stochastic(self.hyperparameters)

    def with_seed(self, seed: int | None) -> "ModelSpec":
        return ModelSpec(self.algorithm, dict(self.hyperparameters), seed)

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "hyperparameters": dict(self.hyperparameters), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        return cls(d["algorithm"], d.get("hyperparameters", {}), d.get("seed"))

    def __hash__(self):
        return hash((self.algorithm, tuple(sorted(self.hyperparameters.items())), self.seed))

    def __eq__(self, other):
        return (isinstance(other, ModelSpec) and self.algorithm == other.algorithm
                and dict(self.hyperparameters) == dict(other.hyperparameters) and self.seed == other.seed)


def frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class TrainedModel:
    """A fitted, immutable predictor.

    Subclasses implement :meth:`_predict` over a 2-D array of raw feature rows
    and the :meth:`state` / :meth:`from_state` pair used for serialization.
    """

    def __init__(self, spec: ModelSpec, feature_set: FeatureSet):
        self.spec = spec
        self.feature_set = feature_set

    def predict(self, x: FeatureVector) -> float:
        if not isinstance(x, FeatureVector) or x.set is not self.feature_set:
            got = x.set.label if isinstance(x, FeatureVector) else type(x).__name__
            raise FeatureSetMismatch(f"model trained on {self.feature_set.label}, got {got}")
        return float(self._predict(x.values[None, :])[0])

    def predict_matrix(self, m: FeatureMatrix) -> np.ndarray:
        if m.set is not self.feature_set:
            raise FeatureSetMismatch(f"model trained on {self.feature_set.label}, got {m.set.label}")
        return self.predict_array(m.X)

    def predict_array(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.feature_set.dimension)
        if len(X) == 0:
            return np.empty(0)
        return np.asarray(self._predict(X), dtype=np.float64)

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_state(cls, spec: ModelSpec, feature_set: FeatureSet, state: dict) -> "TrainedModel":
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.spec.algorithm} on {self.feature_set.label}>"


def check_trainable(spec: ModelSpec, m: FeatureMatrix) -> None:
    if len(m) == 0:
        raise EmptyInputError(f"cannot fit {spec.algorithm} on an empty matrix")
    if spec.stochastic and spec.seed is None:
        raise ConfigError(f"{spec.algorithm} is stochastic and needs an explicit seed")
