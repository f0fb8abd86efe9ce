import json
from dataclasses import replace
from datetime import datetime, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import SNAPSHOT, make_profile, make_scores
from credreg.errors import (
    DuplicateIdError,
    EmptyViewError,
    MissingProfileError,
    ParseError,
    RangeError,
)
from credreg.ingest import (
    AccountProfile,
    Dataset,
    DatasetView,
    GroundTruthRecord,
    Record,
    dump_botometer,
    dump_ground_truth,
    dump_profiles,
    filter_credulous,
    join_sources,
    load_botometer,
    load_dataset,
    load_ground_truth,
    load_profiles,
    parse_timestamp,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def profile_line(account_id, **kw):
    obj = {
        "account_id": account_id, "screen_name": "s", "name": "n", "biography": "", "location": "",
        "url": "", "followers_count": 1, "friends_count": 2, "statuses_count": 3, "listed_count": 0,
        "created_at": "2019-05-01T00:00:00Z", "default_profile_image": False, "has_profile_image": True,
    }
    obj.update(kw)
    return json.dumps(obj)


def gt_dataset(labels, pcts=None):
    pcts = pcts or [float(i) for i in range(len(labels))]
    recs = tuple(Record(GroundTruthRecord(str(i), bool(l), p)) for i, (l, p) in enumerate(zip(labels, pcts)))
    return Dataset(recs, SNAPSHOT)


# ---------------------------------------------------------------- profiles

def test_three_profiles_in_file_order(tmp_path):
    p = write(tmp_path, "p.jsonl", "\n".join(profile_line(i) for i in ("c", "a", "b")) + "\n")
    assert [x.account_id for x in load_profiles(p)] == ["c", "a", "b"]


def test_negative_count_is_range_error_on_line_one(tmp_path):
    p = write(tmp_path, "p.jsonl", profile_line("a", followers_count=-1) + "\n")
    with pytest.raises(RangeError) as e:
        load_profiles(p)
    assert e.value.line == 1
    assert "line 1" in str(e.value)


def test_empty_profile_file_is_valid(tmp_path):
    assert load_profiles(write(tmp_path, "p.jsonl", "")) == []


def test_malformed_profile_line_cites_line_number(tmp_path):
    p = write(tmp_path, "p.jsonl", profile_line("a") + "\n{not json\n")
    with pytest.raises(ParseError) as e:
        load_profiles(p)
    assert e.value.line == 2


def test_duplicate_profile_id_is_listed(tmp_path):
    p = write(tmp_path, "p.jsonl", "\n".join([profile_line("a"), profile_line("b"), profile_line("a")]))
    with pytest.raises(DuplicateIdError) as e:
        load_profiles(p)
    assert e.value.ids == ["a"]


def test_twitter_timestamp_format_is_accepted():
    ts = parse_timestamp("Wed Aug 27 13:08:45 +0000 2008")
    assert ts == datetime(2008, 8, 27, 13, 8, 45, tzinfo=timezone.utc)


def test_missing_profile_field_is_parse_error(tmp_path):
    p = write(tmp_path, "p.jsonl", json.dumps({"account_id": "a"}) + "\n")
    with pytest.raises(ParseError):
        load_profiles(p)


# ---------------------------------------------------------------- ground truth

def test_boundary_percentages_accepted(tmp_path):
    p = write(tmp_path, "gt.csv", "account_id,credulous,bot_followee_pct\na,0,0\nb,1,12.5\nc,0,100\n")
    d = load_ground_truth(p, SNAPSHOT)
    assert len(d) == 3
    assert [r.truth.bot_followee_pct for r in d.records] == [0.0, 12.5, 100.0]
    assert d.view is DatasetView.ALL_HUMANS


def test_percentage_above_hundred_cites_row(tmp_path):
    p = write(tmp_path, "gt.csv", "account_id,credulous,bot_followee_pct\na,0,1\nb,0,101.0\n")
    with pytest.raises(RangeError) as e:
        load_ground_truth(p, SNAPSHOT)
    assert e.value.line == 3


@pytest.mark.parametrize("label", ["2", "yes", "", "-1"])
def test_credulous_label_must_be_binary(tmp_path, label):
    p = write(tmp_path, "gt.csv", f"account_id,credulous,bot_followee_pct\na,{label},1\n")
    with pytest.raises(ParseError):
        load_ground_truth(p, SNAPSHOT)


def test_duplicate_ground_truth_id(tmp_path):
    p = write(tmp_path, "gt.csv", "account_id,credulous,bot_followee_pct\na,0,1\na,1,2\n")
    with pytest.raises(DuplicateIdError):
        load_ground_truth(p, SNAPSHOT)


def test_ground_truth_header_is_checked(tmp_path):
    p = write(tmp_path, "gt.csv", "id,label,pct\na,0,1\n")
    with pytest.raises(ParseError):
        load_ground_truth(p, SNAPSHOT)


# ---------------------------------------------------------------- botometer

def test_botometer_columns_mapped_by_header_name(tmp_path):
    cols = ["mentions4ws", "account_id", "cap_uni", "sentiment", "friend", "user", "content", "temporal",
            "net", "cap_eng", "score_eng", "score_uni", "tweets4ws"]
    vals = {"mentions4ws": "7", "account_id": "a", "cap_uni": "0.25", "sentiment": "1.5", "friend": "2",
            "user": "3", "content": "4", "temporal": "5", "net": "6", "cap_eng": "0.5", "score_eng": "9",
            "score_uni": "10", "tweets4ws": "11"}
    p = write(tmp_path, "b.csv", ",".join(cols) + "\n" + ",".join(vals[c] for c in cols) + "\n")
    (r,) = load_botometer(p)
    assert r.values() == (1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, 0.25, 9.0, 10.0, 11.0, 7.0)


@pytest.mark.parametrize("col,val", [("cap_eng", "1.2"), ("cap_uni", "-0.1"), ("tweets4ws", "-1"),
                                     ("mentions4ws", "2.5")])
def test_botometer_ranges(tmp_path, col, val):
    rec = dump_botometer([make_scores("a")])
    header, row = rec.strip().split("\n")
    cells = dict(zip(header.split(","), row.split(",")))
    cells[col] = val
    p = write(tmp_path, "b.csv", header + "\n" + ",".join(cells[c] for c in header.split(",")) + "\n")
    with pytest.raises(RangeError):
        load_botometer(p)


def test_score_columns_have_no_range_check(tmp_path):
    p = write(tmp_path, "b.csv", dump_botometer([make_scores("a", score_eng=37.0, score_uni=-2.0)]))
    assert load_botometer(p)[0].score_eng == 37.0


# ---------------------------------------------------------------- views and joins

def test_filter_credulous_keeps_order():
    d = filter_credulous(gt_dataset([1, 0, 1]))
    assert d.ids == ["0", "2"]
    assert d.view is DatasetView.CREDULOUS_ONLY
    assert d.snapshot_time == SNAPSHOT


def test_filter_credulous_empty_view():
    with pytest.raises(EmptyViewError):
        filter_credulous(gt_dataset([0, 0, 0]))


@given(st.lists(st.booleans(), min_size=1, max_size=40))
def test_filter_credulous_count(labels):
    d = gt_dataset(labels)
    if not any(labels):
        with pytest.raises(EmptyViewError):
            filter_credulous(d)
    else:
        assert len(filter_credulous(d)) == sum(labels) == d.n_credulous


def test_join_full_match():
    gt = gt_dataset([0, 1])
    d = join_sources(gt, [make_profile("1"), make_profile("0")], [make_scores("0"), make_scores("1")])
    assert d.ids == ["0", "1"]
    assert all(r.profile is not None and r.scores is not None for r in d.records)
    assert d.records[1].profile.account_id == "1"


def test_join_missing_profile_lists_ids():
    with pytest.raises(MissingProfileError) as e:
        join_sources(gt_dataset([0, 1]), [make_profile("0")])
    assert e.value.ids == ["1"]


def test_join_without_scores_is_deferred():
    d = join_sources(gt_dataset([0, 1]), [make_profile("0"), make_profile("1")], [])
    assert [r.scores for r in d.records] == [None, None]


@given(st.lists(st.booleans(), min_size=1, max_size=20), st.randoms())
def test_join_never_reorders(labels, rnd):
    gt = gt_dataset(labels)
    profiles = [make_profile(i) for i in gt.ids]
    rnd.shuffle(profiles)
    assert join_sources(gt, profiles).ids == gt.ids


# ---------------------------------------------------------------- round trip

profile_st = st.builds(
    AccountProfile,
    account_id=st.text("0123456789", min_size=1, max_size=12),
    screen_name=st.text(max_size=10), name=st.text(max_size=10), biography=st.text(max_size=30),
    location=st.text(max_size=10), url=st.text(max_size=10),
    followers_count=st.integers(0, 10**9), friends_count=st.integers(0, 10**9),
    statuses_count=st.integers(0, 10**9), listed_count=st.integers(0, 10**6),
    created_at=st.datetimes(min_value=datetime(2006, 1, 1), max_value=datetime(2019, 12, 31),
                            timezones=st.just(timezone.utc)),
    default_profile_image=st.booleans(), has_profile_image=st.booleans(),
)
pct_st = st.floats(0, 100, allow_nan=False)
unit_st = st.floats(0, 1, allow_nan=False)
real_st = st.floats(-1e6, 1e6, allow_nan=False)


@given(st.lists(profile_st, max_size=8, unique_by=lambda p: p.account_id), st.data())
def test_load_serialize_load_is_identity(tmp_path_factory, profiles, data):
    tmp = tmp_path_factory.mktemp("rt")
    truth = [GroundTruthRecord(p.account_id, data.draw(st.booleans()), data.draw(pct_st)) for p in profiles]
    scores = [make_scores(p.account_id, sentiment=data.draw(real_st), cap_eng=data.draw(unit_st),
                          cap_uni=data.draw(unit_st), score_eng=data.draw(real_st),
                          tweets4ws=data.draw(st.integers(0, 10**6))) for p in profiles]
    paths = [write(tmp, "gt.csv", dump_ground_truth(truth)), write(tmp, "p.jsonl", dump_profiles(profiles)),
             write(tmp, "b.csv", dump_botometer(scores))]
    first = load_dataset(*paths, SNAPSHOT)
    again = [write(tmp, "gt2.csv", dump_ground_truth([r.truth for r in first.records])),
             write(tmp, "p2.jsonl", dump_profiles([r.profile for r in first.records])),
             write(tmp, "b2.csv", dump_botometer([r.scores for r in first.records]))]
    second = load_dataset(*again, SNAPSHOT)
    assert first == second
    assert [r.profile for r in first.records] == profiles
    assert [r.truth for r in first.records] == truth


def test_dataset_rejects_non_credulous_in_credulous_view():
    d = gt_dataset([1, 0])
    with pytest.raises(ValueError):
        replace(d, view=DatasetView.CREDULOUS_ONLY)
