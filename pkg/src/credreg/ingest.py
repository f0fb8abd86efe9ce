"""Loading and joining the three input files.

* ``ground_truth.csv``  -- ``account_id,credulous,bot_followee_pct``
* ``profiles.jsonl``    -- one :class:`AccountProfile` object per line
* ``botometer.csv``     -- the twelve Botometer+ columns keyed by ``account_id``
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from ._files import atomic_write_text
from .errors import (
    DuplicateIdError,
    EmptyViewError,
    MissingProfileError,
    ParseError,
    RangeError,
)

PROFILE_COUNT_FIELDS = ("followers_count", "friends_count", "statuses_count", "listed_count")
PROFILE_TEXT_FIELDS = ("screen_name", "name", "biography", "location", "url")
PROFILE_FLAG_FIELDS = ("default_profile_image", "has_profile_image")

BOTOMETER_COLUMNS = (
    "sentiment", "friend", "user", "content", "temporal", "net",
    "cap_eng", "cap_uni", "score_eng", "score_uni", "tweets4ws", "mentions4ws",
)
GROUND_TRUTH_COLUMNS = ("account_id", "credulous", "bot_followee_pct")

_TWITTER_TIME_FORMAT = "%a %b %d %H:%M:%S %z %Y"

# snapshot assumed when none is given on the command line or in a config file
DEFAULT_SNAPSHOT = datetime(2020, 1, 1, tzinfo=timezone.utc)


class DatasetView(enum.Enum):
    ALL_HUMANS = "all"
    CREDULOUS_ONLY = "credulous"


@dataclass(frozen=True)
class AccountProfile:
    account_id: str
    screen_name: str
    name: str
    biography: str
    location: str
    url: str
    followers_count: int
    friends_count: int
    statuses_count: int
    listed_count: int
    created_at: datetime
    default_profile_image: bool
    has_profile_image: bool


@dataclass(frozen=True)
class BotometerRecord:
    account_id: str
    sentiment: float
    friend: float
    user: float
    content: float
    temporal: float
    net: float
    cap_eng: float
    cap_uni: float
    score_eng: float
    score_uni: float
    tweets4ws: int
    mentions4ws: int

    def values(self) -> tuple[float, ...]:
        return tuple(float(getattr(self, c)) for c in BOTOMETER_COLUMNS)


@dataclass(frozen=True)
class GroundTruthRecord:
    account_id: str
    credulous: bool
    bot_followee_pct: float


@dataclass(frozen=True)
class Record:
    truth: GroundTruthRecord
    profile: AccountProfile | None = None
    scores: BotometerRecord | None = None

    @property
    def account_id(self) -> str:
        return self.truth.account_id


@dataclass(frozen=True)
class Dataset:
    records: tuple[Record, ...]
    snapshot_time: datetime
    view: DatasetView = DatasetView.ALL_HUMANS

    def __post_init__(self):
        _check_unique(r.account_id for r in self.records)
        if self.view is DatasetView.CREDULOUS_ONLY and not all(r.truth.credulous for r in self.records):
            raise ValueError("credulous-only view holds a non-credulous record")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.account_id for r in self.records]

    @property
    def n_credulous(self) -> int:
        return sum(r.truth.credulous for r in self.records)


def parse_timestamp(value: str) -> datetime:
    """Parse ISO-8601 or the legacy Twitter ``created_at`` format into an aware UTC datetime."""
    value = value.strip()
    try:
        ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        ts = datetime.strptime(value, _TWITTER_TIME_FORMAT)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ") if ts.microsecond == 0 \
        else ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _check_unique(ids: Iterable[str]) -> None:
    seen, dup = set(), []
    for i in ids:
        if i in seen and i not in dup:
            dup.append(i)
        seen.add(i)
    if dup:
        raise DuplicateIdError(dup)


def _as_count(obj: dict, key: str, line: int) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise ParseError(f"{key} must be an integer, got {v!r}", line)
    if v < 0:
        raise RangeError(f"{key} must be >= 0, got {v}", line)
    return int(v)


def _as_text(obj: dict, key: str, line: int) -> str:
    v = obj.get(key)
    if v is None:
        return ""
    if not isinstance(v, str):
        raise ParseError(f"{key} must be a string, got {v!r}", line)
    return v


def _as_flag(obj: dict, key: str, line: int) -> bool:
    v = obj[key]
    if isinstance(v, bool):
        return v
    if v in (0, 1):
        return bool(v)
    raise ParseError(f"{key} must be a boolean, got {v!r}", line)


def profile_from_dict(obj: dict, line: int = 0) -> AccountProfile:
    try:
        account_id = obj["account_id"]
        if not isinstance(account_id, (str, int)) or isinstance(account_id, bool):
            raise ParseError(f"account_id must be a string, got {account_id!r}", line)
        created = obj["created_at"]
        if not isinstance(created, str):
            raise ParseError("created_at must be a timestamp string", line)
        try:
            created_at = parse_timestamp(created)
        except ValueError as exc:
            raise ParseError(f"bad created_at {created!r}: {exc}", line) from None
        return AccountProfile(
            account_id=str(account_id),
            **{k: _as_text(obj, k, line) for k in PROFILE_TEXT_FIELDS},
            **{k: _as_count(obj, k, line) for k in PROFILE_COUNT_FIELDS},
            created_at=created_at,
            **{k: _as_flag(obj, k, line) for k in PROFILE_FLAG_FIELDS},
        )
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]}", line) from None


def profile_to_dict(p: AccountProfile) -> dict:
    out = {}
    for f in fields(AccountProfile):
        v = getattr(p, f.name)
        out[f.name] = format_timestamp(v) if isinstance(v, datetime) else v
    return out


def load_profiles(path: str | Path) -> list[AccountProfile]:
    profiles = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno)
            profiles.append(profile_from_dict(obj, lineno))
    _check_unique(p.account_id for p in profiles)
    return profiles


def write_profiles(profiles: Sequence[AccountProfile], path: str | Path) -> None:
    atomic_write_text(path, dump_profiles(profiles))


def dump_profiles(profiles: Sequence[AccountProfile]) -> str:
    return "".join(json.dumps(profile_to_dict(p), ensure_ascii=False) + "\n" for p in profiles)


def _read_csv(path: str | Path, required: Sequence[str]) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"header lacks column(s) {', '.join(missing)}", 1)
        for row in reader:
            # header is line 1; DictReader.line_num counts physical lines read so far
            yield reader.line_num, row


def _as_float(text: str, key: str, line: int) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"{key} is not a number: {text!r}", line) from None
    if not math.isfinite(v):
        raise RangeError(f"{key} must be finite, got {text!r}", line)
    return v


def load_ground_truth(path: str | Path, snapshot_time: datetime) -> Dataset:
    records = []
    for line, row in _read_csv(path, GROUND_TRUTH_COLUMNS):
        label = (row["credulous"] or "").strip()
        if label not in ("0", "1"):
            raise ParseError(f"credulous must be 0 or 1, got {label!r}", line)
        pct = _as_float(row["bot_followee_pct"], "bot_followee_pct", line)
        if not 0.0 <= pct <= 100.0:
            raise RangeError(f"bot_followee_pct must lie in [0, 100], got {pct}", line)
        records.append(Record(GroundTruthRecord(row["account_id"].strip(), label == "1", pct)))
    return Dataset(tuple(records), snapshot_time, DatasetView.ALL_HUMANS)


def dump_ground_truth(records: Iterable[GroundTruthRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GROUND_TRUTH_COLUMNS)
    for r in records:
        w.writerow([r.account_id, int(r.credulous), repr(float(r.bot_followee_pct))])
    return buf.getvalue()


def write_ground_truth(records: Iterable[GroundTruthRecord], path: str | Path) -> None:
    atomic_write_text(path, dump_ground_truth(records))


def load_botometer(path: str | Path) -> list[BotometerRecord]:
    out = []
    for line, row in _read_csv(path, ("account_id",) + BOTOMETER_COLUMNS):
        vals = {c: _as_float(row[c], c, line) for c in BOTOMETER_COLUMNS}
        for c in ("cap_eng", "cap_uni"):
            if not 0.0 <= vals[c] <= 1.0:
                raise RangeError(f"{c} must lie in [0, 1], got {vals[c]}", line)
        for c in ("tweets4ws", "mentions4ws"):
            if vals[c] < 0 or vals[c] != int(vals[c]):
                raise RangeError(f"{c} must be a non-negative integer, got {row[c]!r}", line)
            vals[c] = int(vals[c])
        out.append(BotometerRecord(account_id=row["account_id"].strip(), **vals))
    _check_unique(r.account_id for r in out)
    return out


def dump_botometer(records: Iterable[BotometerRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("account_id",) + BOTOMETER_COLUMNS)
    for r in records:
        w.writerow([r.account_id] + [
            str(getattr(r, c)) if c in ("tweets4ws", "mentions4ws") else repr(float(getattr(r, c)))
            for c in BOTOMETER_COLUMNS
        ])
    return buf.getvalue()


def write_botometer(records: Iterable[BotometerRecord], path: str | Path) -> None:
    atomic_write_text(path, dump_botometer(records))


def filter_credulous(d: Dataset) -> Dataset:
    if d.view is not DatasetView.ALL_HUMANS:
        raise ValueError("filter_credulous expects an all-humans dataset")
    kept = tuple(r for r in d.records if r.truth.credulous)
    if not kept:
        raise EmptyViewError("credulous-only view is empty: no record has credulous=1")
    return Dataset(kept, d.snapshot_time, DatasetView.CREDULOUS_ONLY)


def join_sources(
    gt: Dataset,
    profiles: Sequence[AccountProfile],
    scores: Sequence[BotometerRecord] = (),
) -> Dataset:
    """Attach profiles (required) and Botometer records (optional) to every ground-truth row.

    A missing score record is not an error here; feature assembly raises
    :class:`~credreg.errors.MissingScoresError` if a Botometer-based set is requested.
    """
    by_profile = {p.account_id: p for p in profiles}
    by_scores = {s.account_id: s for s in scores}
    missing = [r.account_id for r in gt.records if r.account_id not in by_profile]
    if missing:
        raise MissingProfileError(missing)
    joined = tuple(
        replace(r, profile=by_profile[r.account_id], scores=by_scores.get(r.account_id))
        for r in gt.records
    )
    return Dataset(joined, gt.snapshot_time, gt.view)


def load_dataset(
    ground_truth: str | Path,
    profiles: str | Path,
    botometer: str | Path | None,
    snapshot_time: datetime,
) -> Dataset:
    gt = load_ground_truth(ground_truth, snapshot_time)
    scores = load_botometer(botometer) if botometer is not None else []
    return join_sources(gt, load_profiles(profiles), scores)
