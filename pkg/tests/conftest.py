from __future__ import annotations

from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from credreg.features import FeatureMatrix, FeatureSet
from credreg.ingest import AccountProfile, BotometerRecord

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SNAPSHOT = datetime(2020, 1, 1, tzinfo=timezone.utc)


def make_profile(account_id="1", **kw) -> AccountProfile:
    base = dict(
        account_id=account_id, screen_name=f"user{account_id}", name="Some Name", biography="hello",
        location="Rome", url="", followers_count=100, friends_count=200, statuses_count=1000,
        listed_count=0, created_at=datetime(2019, 1, 1, tzinfo=timezone.utc),
        default_profile_image=False, has_profile_image=True,
    )
    base.update(kw)
    return AccountProfile(**base)


def make_scores(account_id="1", **kw) -> BotometerRecord:
    base = dict(account_id=account_id, sentiment=0.0, friend=0.0, user=0.0, content=0.0, temporal=0.0,
                net=0.0, cap_eng=0.0, cap_uni=0.0, score_eng=0.0, score_uni=0.0, tweets4ws=0, mentions4ws=0)
    base.update(kw)
    return BotometerRecord(**base)


def matrix(X, y, fs: FeatureSet | None = None) -> FeatureMatrix:
    """Feature matrix over an arbitrary ``X``; columns are zero-padded to the set's width."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    fs = fs or next(s for s in (FeatureSet.BOTOMETER_PLUS, FeatureSet.CLASS_A_MINUS, FeatureSet.ALL_FEATURES)
                    if s.dimension >= X.shape[1])
    padded = np.zeros((len(X), fs.dimension))
    padded[:, :X.shape[1]] = X
    return FeatureMatrix(fs, padded, np.asarray(y, dtype=np.float64), tuple(str(i) for i in range(len(X))))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
