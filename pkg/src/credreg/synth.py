"""Seeded synthetic accounts with a planted linear feature-to-target dependency.

The generator exists to make end-to-end runs decisive without Twitter data:
targets are a known linear function of the min/max-scaled All_features
columns plus Gaussian noise, so linear learners must beat the mean predictor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Mapping

import numpy as np

from ._files import atomic_write_text
from .errors import ConfigError
from .features import FeatureSet, build_vectors
from .ingest import (
    BOTOMETER_COLUMNS,
    DEFAULT_SNAPSHOT,
    AccountProfile,
    BotometerRecord,
    GroundTruthRecord,
    dump_botometer,
    dump_ground_truth,
    dump_profiles,
    parse_timestamp,
)
from .numeric import RandomSource

PROFILES_FILE = "profiles.jsonl"
BOTOMETER_FILE = "botometer.csv"
GROUND_TRUTH_FILE = "ground_truth.csv"

_MAX_AGE_DAYS = 3652

_DEFAULT_WEIGHTS = {
    "age_days": -4.0,
    "has_url": -1.5,
    "default_image_after_2_months": 3.0,
    "belongs_to_list": -2.5,
    "friends_followers_ge_50": 5.0,
    "bot_in_biography": 3.0,
    "two_followers_ge_friends": -2.0,
    "no_bio_no_location_friends_ge_100": 2.0,
    "friend": 4.0,
    "content": 5.0,
    "temporal": 4.0,
    "cap_eng": 12.0,
    "cap_uni": 6.0,
    "score_uni": 3.0,
}


def default_weights() -> tuple[float, ...]:
    names = FeatureSet.ALL_FEATURES.names
    return tuple(float(_DEFAULT_WEIGHTS.get(n, 0.0)) for n in names)


@dataclass(frozen=True)
class SynthConfig:
    n_accounts: int = 2838
    credulous_fraction: float = 316 / 2838
    noise_std: float = 4.0
    planted_weights: tuple[float, ...] = field(default_factory=default_weights)
    intercept: float = 2.0
    seed: int = 0
    snapshot_time: datetime = DEFAULT_SNAPSHOT

    def __post_init__(self):
        w = tuple(float(v) for v in self.planted_weights)
        object.__setattr__(self, "planted_weights", w)
        dim = FeatureSet.ALL_FEATURES.dimension
        if len(w) != dim:
            raise ConfigError(f"planted_weights needs {dim} values, got {len(w)}")
        if not all(np.isfinite(w)) or not np.isfinite(self.intercept):
            raise ConfigError("planted_weights and intercept must be finite")
        if not any(w):
            raise ConfigError("all planted weights are zero; targets would be noise only")
        if int(self.n_accounts) != self.n_accounts or self.n_accounts < 20:
            raise ConfigError(f"n_accounts must be an integer of at least 20, got {self.n_accounts}")
        if not 0.0 < self.credulous_fraction < 1.0:
            raise ConfigError(f"credulous_fraction must lie strictly between 0 and 1, got {self.credulous_fraction}")
        if not 0 < round(self.n_accounts * self.credulous_fraction) < self.n_accounts:
            raise ConfigError("credulous_fraction leaves one label class empty")
        if not (np.isfinite(self.noise_std) and self.noise_std >= 0):
            raise ConfigError(f"noise_std must be a finite non-negative number, got {self.noise_std}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def n_credulous(self) -> int:
        return int(round(self.n_accounts * self.credulous_fraction))

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "SynthConfig":
        """Build from flat string values as read from a key=value file."""
        kinds = {"n_accounts": int, "credulous_fraction": float, "noise_std": float,
                 "intercept": float, "seed": int}
        kwargs = {}
        for key, text in values.items():
            try:
                if key in kinds:
                    kwargs[key] = kinds[key](text)
                elif key == "planted_weights":
                    kwargs[key] = tuple(float(v) for v in str(text).split(","))
                elif key == "snapshot_time":
                    kwargs[key] = parse_timestamp(text)
                else:
                    raise ConfigError(f"unknown synth setting {key!r}")
            except ValueError:
                raise ConfigError(f"invalid value {text!r} for {key}") from None
        return cls(**kwargs)


@dataclass(frozen=True)
class SynthData:
    profiles: tuple[AccountProfile, ...]
    scores: tuple[BotometerRecord, ...]
    truth: tuple[GroundTruthRecord, ...]
    snapshot_time: datetime

    def files(self) -> dict[str, str]:
        """File name to exact file content for the three input files."""
        return {
            PROFILES_FILE: dump_profiles(self.profiles),
            BOTOMETER_FILE: dump_botometer(self.scores),
            GROUND_TRUTH_FILE: dump_ground_truth(self.truth),
        }


def _profiles(cfg: SynthConfig, rng: np.random.Generator) -> list[AccountProfile]:
    n = cfg.n_accounts
    followers = np.floor(rng.lognormal(5.0, 1.8, n)).astype(np.int64)
    friends = np.floor(rng.lognormal(5.5, 1.3, n)).astype(np.int64)
    statuses = np.floor(rng.lognormal(7.0, 1.8, n)).astype(np.int64)
    listed = np.where(rng.random(n) < 0.4, 0, np.floor(rng.lognormal(1.0, 1.2, n))).astype(np.int64)
    age_s = rng.integers(0, _MAX_AGE_DAYS * 86400, n)
    has_name = rng.random(n) < 0.95
    has_bio = rng.random(n) < 0.7
    bot_word = rng.random(n) < 0.05
    has_loc = rng.random(n) < 0.6
    has_url = rng.random(n) < 0.3
    default_img = rng.random(n) < 0.1
    has_img = rng.random(n) < 0.9
    out = []
    for i in range(n):
        bio = ""
        if has_bio[i]:
            bio = "part-time bot builder" if bot_word[i] else f"synthetic account {i}"
        out.append(AccountProfile(
            account_id=f"{1_000_000 + i}",
            screen_name=f"synth_{i:06d}",
            name=f"Synthetic User {i}" if has_name[i] else "",
            biography=bio,
            location="Pisa" if has_loc[i] else "",
            url=f"https://example.org/u/{i}" if has_url[i] else "",
            followers_count=int(followers[i]),
            friends_count=int(friends[i]),
            statuses_count=int(statuses[i]),
            listed_count=int(listed[i]),
            created_at=cfg.snapshot_time - timedelta(seconds=int(age_s[i])),
            default_profile_image=bool(default_img[i]),
            has_profile_image=bool(has_img[i]),
        ))
    return out


def _scores(ids: list[str], rng: np.random.Generator) -> list[BotometerRecord]:
    n = len(ids)
    unit = {c: rng.uniform(0.0, 5.0, n) for c in ("sentiment", "friend", "user", "content", "temporal", "net",
                                                 "score_eng", "score_uni")}
    cap = {c: rng.beta(1.0, 4.0, n) for c in ("cap_eng", "cap_uni")}
    tweets = rng.integers(0, 201, n)
    mentions = rng.integers(0, 101, n)
    out = []
    for i, account in enumerate(ids):
        vals = {c: float(v[i]) for c, v in {**unit, **cap}.items()}
        out.append(BotometerRecord(account_id=account, tweets4ws=int(tweets[i]), mentions4ws=int(mentions[i]),
                                   **{c: vals[c] for c in BOTOMETER_COLUMNS[:10]}))
    return out


def planted_targets(X: np.ndarray, weights, intercept: float) -> np.ndarray:
    """``intercept + scaled(X) @ weights`` with each column min/max-scaled over ``X``."""
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    Z = np.where(span > 0, (X - lo) / np.where(span > 0, span, 1.0), 0.0)
    return intercept + Z @ np.asarray(weights, dtype=np.float64)


def generate(cfg: SynthConfig) -> SynthData:
    root = RandomSource(cfg.seed)
    profiles = _profiles(cfg, root.child("profiles").generator)
    ids = [p.account_id for p in profiles]
    scores = _scores(ids, root.child("scores").generator)
    X = build_vectors(profiles, scores, ids, FeatureSet.ALL_FEATURES, cfg.snapshot_time)
    noise = root.child("noise").normal(0.0, cfg.noise_std, cfg.n_accounts) if cfg.noise_std > 0 else 0.0
    y = np.clip(planted_targets(X, cfg.planted_weights, cfg.intercept) + noise, 0.0, 100.0)
    # highest targets are credulous; ties resolved by input order
    ranked = np.argsort(-y, kind="stable")
    credulous = np.zeros(cfg.n_accounts, dtype=bool)
    credulous[ranked[:cfg.n_credulous]] = True
    truth = [GroundTruthRecord(ids[i], bool(credulous[i]), float(y[i])) for i in range(cfg.n_accounts)]
    return SynthData(tuple(profiles), tuple(scores), tuple(truth), cfg.snapshot_time)


def write_dataset(data: SynthData, directory: str | Path) -> dict[str, Path]:
    return {name: atomic_write_text(Path(directory) / name, text) for name, text in data.files().items()}
