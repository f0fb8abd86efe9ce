"""Feature sets and design matrices.

Column order of every feature set is a frozen contract: the names below are
written as CSV headers and stored inside serialized models.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    EmptyInputError,
    FeatureSetMismatch,
    MissingProfileError,
    MissingScoresError,
    TemporalError,
)
from .ingest import BOTOMETER_COLUMNS, AccountProfile, BotometerRecord, Dataset

CLASS_A_MINUS_NAMES = (
    "friends_over_followers_sq",
    "age_days",
    "tweets",
    "has_name",
    "has_url",
    "following_rate",
    "default_image_after_2_months",
    "belongs_to_list",
    "has_profile_image",
    "friends_followers_ge_50",
    "bot_in_biography",
    "friends",
    "two_followers_ge_friends",
    "followers",
    "friends_followers_approx_100",
    "no_bio_no_location_friends_ge_100",
    "has_address",
    "has_biography",
)
BOTOMETER_PLUS_NAMES = BOTOMETER_COLUMNS


class FeatureSet(enum.Enum):
    CLASS_A_MINUS = "classa"
    BOTOMETER_PLUS = "botometer"
    ALL_FEATURES = "all"

    @property
    def names(self) -> tuple[str, ...]:
        if self is FeatureSet.CLASS_A_MINUS:
            return CLASS_A_MINUS_NAMES
        if self is FeatureSet.BOTOMETER_PLUS:
            return BOTOMETER_PLUS_NAMES
        return CLASS_A_MINUS_NAMES + BOTOMETER_PLUS_NAMES

    @property
    def dimension(self) -> int:
        return len(self.names)

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def needs_scores(self) -> bool:
        return self is not FeatureSet.CLASS_A_MINUS

    @property
    def needs_profile(self) -> bool:
        return self is not FeatureSet.BOTOMETER_PLUS

    @classmethod
    def parse(cls, text: str) -> "FeatureSet":
        key = text.strip().lower()
        for fs in cls:
            if key in (fs.value, fs.label.lower(), fs.name.lower()):
                return fs
        raise ConfigError(f"unknown feature set {text!r}; choose from classa, botometer, all")


_LABELS = {
    FeatureSet.CLASS_A_MINUS: "ClassA-",
    FeatureSet.BOTOMETER_PLUS: "Botometer+",
    FeatureSet.ALL_FEATURES: "All_features",
}


@dataclass(frozen=True, eq=False)
class FeatureVector:
    set: FeatureSet
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.set.dimension,):
            raise ValueError(f"{self.set.label} vector needs {self.set.dimension} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature vector holds NaN or infinite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    set: FeatureSet
    X: np.ndarray
    targets: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64).reshape(-1, self.set.dimension)
        y = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if not (len(X) == len(y) == len(self.ids)):
            raise ValueError("rows, targets and ids differ in length")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "ids", tuple(self.ids))

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def rows(self) -> list[FeatureVector]:
        return [FeatureVector(self.set, r) for r in self.X]

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=np.intp)
        return FeatureMatrix(self.set, self.X[idx], self.targets[idx], tuple(self.ids[i] for i in idx))


def class_a_minus(p: AccountProfile, snapshot_time: datetime) -> FeatureVector:
    seconds = (snapshot_time - p.created_at).total_seconds()
    if seconds < 0:
        raise TemporalError(f"account {p.account_id} was created after the snapshot time")
    age_days = math.floor(seconds / 86400)
    friends, followers = p.friends_count, p.followers_count
    denom = max(followers, 1)
    ratio = friends / denom
    values = [
        friends / denom ** 2,
        age_days,
        p.statuses_count,
        p.name != "",
        p.url != "",
        friends / max(age_days, 1),
        p.default_profile_image and age_days >= 60,
        p.listed_count > 0,
        p.has_profile_image,
        ratio >= 50,
        "bot" in p.biography.lower(),
        friends,
        2 * followers >= friends,
        followers,
        90 <= ratio <= 110,
        p.biography == "" and p.location == "" and friends >= 100,
        p.location != "",
        p.biography != "",
    ]
    return FeatureVector(FeatureSet.CLASS_A_MINUS, np.array(values, dtype=np.float64))


def botometer_plus(r: BotometerRecord | None, account_id: str | None = None) -> FeatureVector:
    if r is None:
        raise MissingScoresError([account_id or "<unknown>"])
    return FeatureVector(FeatureSet.BOTOMETER_PLUS, np.array(r.values(), dtype=np.float64))


def all_features(a: FeatureVector, b: FeatureVector) -> FeatureVector:
    if a.set is not FeatureSet.CLASS_A_MINUS or b.set is not FeatureSet.BOTOMETER_PLUS:
        raise FeatureSetMismatch(
            f"all_features expects (ClassA-, Botometer+), got ({a.set.label}, {b.set.label})"
        )
    return FeatureVector(FeatureSet.ALL_FEATURES, np.concatenate([a.values, b.values]))


def build_vectors(
    profiles: Sequence[AccountProfile | None],
    scores: Sequence[BotometerRecord | None],
    ids: Sequence[str],
    fs: FeatureSet,
    snapshot_time: datetime,
) -> np.ndarray:
    """Stack feature vectors for parallel sequences of sources into an (n, dim) array."""
    if fs.needs_scores:
        missing = [i for i, s in zip(ids, scores) if s is None]
        if missing:
            raise MissingScoresError(missing)
    rows = np.empty((len(ids), fs.dimension))
    for k, (p, s) in enumerate(zip(profiles, scores)):
        if fs is FeatureSet.BOTOMETER_PLUS:
            rows[k] = botometer_plus(s).values
        elif fs is FeatureSet.CLASS_A_MINUS:
            rows[k] = class_a_minus(p, snapshot_time).values
        else:
            rows[k] = all_features(class_a_minus(p, snapshot_time), botometer_plus(s)).values
    return rows


def assemble_matrix(d: Dataset, fs: FeatureSet) -> FeatureMatrix:
    if fs.needs_profile:
        no_profile = [r.account_id for r in d.records if r.profile is None]
        if no_profile:
            raise MissingProfileError(no_profile)
    X = build_vectors(
        [r.profile for r in d.records],
        [r.scores for r in d.records],
        d.ids,
        fs,
        d.snapshot_time,
    )
    y = np.array([r.truth.bot_followee_pct for r in d.records], dtype=np.float64)
    return FeatureMatrix(fs, X, y, tuple(d.ids))


class ColumnScaler:
    """Per-column min/max affine map onto [0, 1]; constant columns map to 0."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        span = self.hi - self.lo
        self._constant = ~(span > 0)
        self._span = np.where(self._constant, 1.0, span)

    @classmethod
    def fit(cls, X: np.ndarray) -> "ColumnScaler":
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise EmptyInputError("cannot fit a column scaler on an empty matrix")
        return cls(X.min(axis=0), X.max(axis=0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.lo) / self._span
        Z[..., self._constant] = 0.0
        return Z

    def __eq__(self, other):
        return (isinstance(other, ColumnScaler) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))


def normalize_columns(m: FeatureMatrix) -> tuple[FeatureMatrix, ColumnScaler]:
    if len(m) == 0:
        raise EmptyInputError("cannot normalize an empty feature matrix")
    scaler = ColumnScaler.fit(m.X)
    return FeatureMatrix(m.set, scaler.transform(m.X), m.targets, m.ids), scaler


def matrix_to_csv(m: FeatureMatrix) -> str:
    lines = [",".join(("account_id",) + m.set.names + ("bot_followee_pct",))]
    for i, row, t in zip(m.ids, m.X, m.targets):
        lines.append(",".join([i] + [repr(float(v)) for v in row] + [repr(float(t))]))
    return "\n".join(lines) + "\n"
