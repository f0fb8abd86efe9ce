"""Versioned JSON serialization of fitted models."""

from __future__ import annotations

import json
from pathlib import Path

from .._files import atomic_write_text
from ..errors import ConfigError
from ..features import FeatureSet
from .base import ModelSpec, TrainedModel
from .models import MODEL_CLASSES

MODEL_FORMAT = "credreg-model"
MODEL_FORMAT_VERSION = 1


def dumps_model(model: TrainedModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "feature_set": model.feature_set.value,
        "feature_names": list(model.feature_set.names),
        "state": model.state(),
    }
    return json.dumps(doc, allow_nan=False, separators=(",", ":"))


def loads_model(text: str) -> TrainedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"model file is not valid JSON: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ConfigError("not a credreg model file")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ConfigError(f"model format version {doc.get('version')!r} is not supported "
                          f"(expected {MODEL_FORMAT_VERSION})")
    try:
        fs = FeatureSet(doc["feature_set"])
    except ValueError:
        raise ConfigError(f"unknown feature set {doc['feature_set']!r} in model file") from None
    if list(doc.get("feature_names", [])) != list(fs.names):
        raise ConfigError("model feature names do not match this build's frozen feature order")
    spec = ModelSpec.from_dict(doc["spec"])
    return MODEL_CLASSES[spec.algorithm].from_state(spec, fs, doc["state"])


def save_model(model: TrainedModel, path: str | Path) -> None:
    atomic_write_text(path, dumps_model(model))


def load_model(path: str | Path) -> TrainedModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))
