"""Run configuration from a flat key=value file, ``CREDREG_*`` variables and flags.

Later sources win: file, then environment, then command-line flags. Keys are
checked before any work starts and unknown keys are rejected.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Mapping

from .errors import ConfigError
from .evaluation import METRICS, default_threads
from .features import FeatureSet
from .ingest import DEFAULT_SNAPSHOT, DatasetView, parse_timestamp
from .regress import ALGORITHMS, HYPERPARAMETERS, ModelSpec

ENV_PREFIX = "CREDREG_"
DEFAULT_FEATURE_SETS = (FeatureSet.BOTOMETER_PLUS, FeatureSet.CLASS_A_MINUS, FeatureSet.ALL_FEATURES)


def read_kv(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment line."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_kv(text)


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"config line {lineno}: expected key = value")
        if key in out:
            raise ConfigError(f"config line {lineno}: {key!r} set twice")
        out[key] = value.strip()
    return out


def env_values(keys, environ: Mapping[str, str] | None = None) -> dict[str, str]:
    """Settings from ``CREDREG_<KEY>`` variables; unknown ``CREDREG_`` names are rejected."""
    environ = os.environ if environ is None else environ
    allowed = {ENV_PREFIX + k.upper(): k for k in keys}
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        if name not in allowed:
            raise ConfigError(f"unknown environment setting {name}")
        out[allowed[name]] = value
    return out


def _split(text: str) -> list[str]:
    return [part.strip() for part in str(text).split(",") if part.strip()]


def _bool(text: str) -> bool:
    key = str(text).strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _int(text: str) -> int:
    return int(str(text).strip())


def _literal(text: str) -> Any:
    """Hyperparameter value: none, a boolean, an integer or a real."""
    key = str(text).strip()
    if key.lower() in ("none", "null", ""):
        return None
    # only words become booleans so that "1" stays an integer
    if key.lower() in ("true", "yes", "on", "false", "no", "off"):
        return _bool(key)
    try:
        return int(key)
    except ValueError:
        return float(key)


def _view(text: str) -> tuple[DatasetView, ...]:
    views = []
    for part in _split(text):
        try:
            views.append(DatasetView(part.lower()))
        except ValueError:
            raise ConfigError(f"unknown view {part!r}; choose from all, credulous") from None
    if not views or len(set(views)) != len(views):
        raise ConfigError("view needs one or more distinct values")
    return tuple(views)


def _sets(text: str) -> tuple[FeatureSet, ...]:
    sets = tuple(FeatureSet.parse(p) for p in _split(text))
    if not sets or len(set(sets)) != len(sets):
        raise ConfigError("feature_sets needs one or more distinct values")
    return sets


def _algorithms(text: str) -> tuple[str, ...]:
    parts = _split(text)
    if [p.lower() for p in parts] == ["all"]:
        return ALGORITHMS
    by_lower = {a.lower(): a for a in ALGORITHMS}
    out = []
    for p in parts:
        if p.lower() not in by_lower:
            raise ConfigError(f"unknown algorithm {p!r}; choose from {', '.join(ALGORITHMS)}")
        out.append(by_lower[p.lower()])
    if not out or len(set(out)) != len(out):
        raise ConfigError("algorithms needs one or more distinct values")
    return tuple(out)


def _metrics(text: str) -> tuple[str, ...]:
    out = tuple(p.lower() for p in _split(text))
    if not out or any(m not in METRICS for m in out) or len(set(out)) != len(out):
        raise ConfigError(f"metrics must be a list drawn from {', '.join(METRICS)}")
    return out


def _positive(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def check(text):
        v = parse(text)
        if v < 1:
            raise ValueError(text)
        return v
    return check


def _path(text: str) -> Path | None:
    return Path(text) if str(text).strip() else None


_FIELDS: dict[str, Callable[[str], Any]] = {
    "ground_truth": _path,
    "profiles": _path,
    "botometer": _path,
    "snapshot_time": parse_timestamp,
    "view": _view,
    "feature_sets": _sets,
    "algorithms": _algorithms,
    "k": _positive(_int),
    "repeats": _positive(_int),
    "seed": _int,
    "metrics": _metrics,
    "threads": _positive(_int),
    "out": _path,
    "alpha": float,
    "corrected": _bool,
    "predictions": _bool,
}
_PATH_KEYS = ("ground_truth", "profiles", "botometer", "out")
RUN_KEYS = tuple(_FIELDS)


@dataclass(frozen=True)
class RunConfig:
    ground_truth: Path | None = None
    profiles: Path | None = None
    botometer: Path | None = None
    snapshot_time: datetime = DEFAULT_SNAPSHOT
    view: tuple[DatasetView, ...] = (DatasetView.ALL_HUMANS,)
    feature_sets: tuple[FeatureSet, ...] = DEFAULT_FEATURE_SETS
    algorithms: tuple[str, ...] = ALGORITHMS
    k: int = 10
    repeats: int = 10
    seed: int = 0
    metrics: tuple[str, ...] = METRICS
    threads: int = field(default_factory=default_threads)
    out: Path | None = None
    alpha: float = 0.05
    corrected: bool = True
    predictions: bool = False
    hyperparameters: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.k < 2:
            raise ConfigError("k must be at least 2")

    def specs(self) -> list[ModelSpec]:
        return [ModelSpec(a, dict(self.hyperparameters.get(a, {}))) for a in self.algorithms]

    def require_inputs(self) -> None:
        missing = [k for k in ("ground_truth", "profiles") if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"missing input path(s): {', '.join(missing)}")


def _apply(values: Mapping[str, str], base_dir: Path | None) -> dict[str, Any]:
    kwargs: dict[str, Any] = {}
    hyper: dict[str, dict[str, Any]] = {}
    by_lower = {a.lower(): a for a in ALGORITHMS}
    for key, text in values.items():
        if "." in key:
            alg, _, param = key.partition(".")
            name = by_lower.get(alg.strip().lower())
            if name is None or param not in HYPERPARAMETERS[name].checks:
                raise ConfigError(f"unknown setting {key!r}")
            try:
                hyper.setdefault(name, {})[param] = _literal(text)
            except ValueError:
                raise ConfigError(f"invalid value {text!r} for {key}") from None
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown setting {key!r}")
        try:
            value = _FIELDS[key](text)
        except ValueError:
            raise ConfigError(f"invalid value {text!r} for {key}") from None
        if key in _PATH_KEYS and value is not None and base_dir is not None and not value.is_absolute():
            value = base_dir / value
        kwargs[key] = value
    if hyper:
        kwargs["hyperparameters"] = hyper
    return kwargs


def build_run_config(file: str | Path | None = None, flags: Mapping[str, str] | None = None,
                     environ: Mapping[str, str] | None = None) -> RunConfig:
    """Merge the three sources; relative paths in the file resolve against its directory."""
    merged: dict[str, Any] = {}
    hyper: dict[str, dict[str, Any]] = {}
    sources = []
    if file is not None:
        sources.append((read_kv(file), Path(file).resolve().parent))
    sources.append((env_values(RUN_KEYS, environ), None))
    sources.append(({k: v for k, v in (flags or {}).items() if v is not None}, None))
    for values, base in sources:
        kwargs = _apply(values, base)
        for alg, params in kwargs.pop("hyperparameters", {}).items():
            hyper.setdefault(alg, {}).update(params)
        merged.update(kwargs)
    for alg, params in hyper.items():
        ModelSpec(alg, params)
    return RunConfig(**merged, hyperparameters=hyper)
