"""Regression learners behind a single ``fit`` / ``predict`` contract."""

from __future__ import annotations

from ..features import FeatureMatrix, FeatureVector
from .base import ALGORITHMS, HYPERPARAMETERS, ModelSpec, TrainedModel, check_trainable
from .models import MODEL_CLASSES, Tree
from .persist import MODEL_FORMAT_VERSION, dumps_model, load_model, loads_model, save_model


def fit(spec: ModelSpec, m: FeatureMatrix) -> TrainedModel:
    check_trainable(spec, m)
    return MODEL_CLASSES[spec.algorithm].fit(spec, m)


def predict(model: TrainedModel, x: FeatureVector) -> float:
    return model.predict(x)


def fit_zero_r(m: FeatureMatrix) -> TrainedModel:
    return fit(ModelSpec("ZeroR"), m)


def fit_linear(m: FeatureMatrix, ridge: float = 1e-8) -> TrainedModel:
    return fit(ModelSpec("LinearRegression", {"ridge": ridge}), m)


def fit_ibk(m: FeatureMatrix, k: int = 1) -> TrainedModel:
    return fit(ModelSpec("IBk", {"k": k}), m)


def fit_lwl(m: FeatureMatrix) -> TrainedModel:
    return fit(ModelSpec("LWL"), m)


def fit_stump(m: FeatureMatrix, weights=None) -> TrainedModel:
    spec = ModelSpec("DecisionStump")
    check_trainable(spec, m)
    return MODEL_CLASSES["DecisionStump"].fit(spec, m, weights)


def fit_additive(m: FeatureMatrix, iterations: int = 10, shrinkage: float = 1.0) -> TrainedModel:
    return fit(ModelSpec("AdditiveRegression", {"iterations": iterations, "shrinkage": shrinkage}), m)


def fit_reg_by_disc(m: FeatureMatrix, bins: int = 10) -> TrainedModel:
    return fit(ModelSpec("RegressionByDiscretization", {"bins": bins}), m)


def fit_gp(m: FeatureMatrix, gamma: float | None = None, noise: float = 1.0) -> TrainedModel:
    return fit(ModelSpec("GaussianProcesses", {"gamma": gamma, "noise": noise}), m)


def fit_smoreg(m: FeatureMatrix, C: float = 1.0, epsilon: float = 1e-3, tolerance: float = 1e-3,
               max_iter: int = 1_000_000) -> TrainedModel:
    hp = {"C": C, "epsilon": epsilon, "tolerance": tolerance, "max_iter": max_iter}
    return fit(ModelSpec("SMOreg", hp), m)


def fit_reptree(m: FeatureMatrix, max_depth: int = -1, min_leaf: int = 2, prune: bool = True,
                seed: int | None = None) -> TrainedModel:
    hp = {"max_depth": max_depth, "min_leaf": min_leaf, "prune": prune}
    return fit(ModelSpec("REPTree", hp, seed), m)


def fit_random_forest(m: FeatureMatrix, trees: int = 100, features_per_split: int | None = None,
                      seed: int | None = None, bootstrap: bool = True, min_leaf: int = 1) -> TrainedModel:
    hp = {"trees": trees, "features_per_split": features_per_split, "bootstrap": bootstrap,
          "min_leaf": min_leaf}
    return fit(ModelSpec("RandomForest", hp, seed), m)


__all__ = [
    "ALGORITHMS", "HYPERPARAMETERS", "MODEL_CLASSES", "MODEL_FORMAT_VERSION", "ModelSpec", "TrainedModel",
    "Tree", "dumps_model", "fit", "fit_additive", "fit_gp", "fit_ibk", "fit_linear", "fit_lwl",
    "fit_random_forest", "fit_reg_by_disc", "fit_reptree", "fit_smoreg", "fit_stump", "fit_zero_r",
    "load_model", "loads_model", "predict", "save_model",
]
