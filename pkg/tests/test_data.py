import json
import os
import tempfile
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sentifuse import data as D
from sentifuse.errors import ContractError, FeatureLookupError, ParseError

from conftest import make_record, write_jsonl


def test_load_three_records(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [make_record(i) for i in range(3)])
    data = D.load_dataset(path)
    assert [d.id for d in data] == ["r0", "r1", "r2"]
    np.testing.assert_array_equal(data[2].features, [2.0, 3.0, 4.0, 5.0])
    assert data[0].label is None


def test_missing_score_names_field_and_line(tmp_path):
    recs = [make_record(0), make_record(1)]
    del recs[1]["anp_score"]
    with pytest.raises(ParseError, match=r"line 2.*anp_score"):
        D.load_dataset(write_jsonl(tmp_path / "d.jsonl", recs))


def test_malformed_json_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(json.dumps(make_record(0)) + "\n{oops\n")
    with pytest.raises(ParseError, match="line 2"):
        D.load_dataset(path)


def test_anp_must_be_two_words(tmp_path):
    with pytest.raises(ParseError, match="adjective-noun"):
        D.load_dataset(write_jsonl(tmp_path / "d.jsonl", [make_record(0, anp="smile")]))


def test_features_and_ref_are_exclusive(tmp_path):
    rec = make_record(0, features_ref="x")
    with pytest.raises(ParseError, match="exactly one"):
        D.load_dataset(write_jsonl(tmp_path / "d.jsonl", [rec]))


def test_feature_dimension_constant(tmp_path):
    recs = [make_record(0), make_record(1, dim=5)]
    with pytest.raises(ParseError, match="line 2"):
        D.load_dataset(write_jsonl(tmp_path / "d.jsonl", recs))


def test_feature_file_roundtrip_and_refs(tmp_path):
    matrix = np.arange(12, dtype=np.float32).reshape(3, 4) / 7
    D.write_feature_file(tmp_path / "f.sfv", ["a", "b", "c"], matrix)
    raw = (tmp_path / "f.sfv").read_bytes()
    assert raw[:4] == b"SFV1"
    assert raw[4:12] == (3).to_bytes(4, "little") + (4).to_bytes(4, "little")
    assert (tmp_path / "f.sfv.ids").read_text() == "a\nb\nc\n"

    recs = []
    for i, ref in enumerate(["c", "a"]):
        rec = make_record(i)
        del rec["features"]
        rec["features_ref"] = ref
        recs.append(rec)
    data = D.load_dataset(write_jsonl(tmp_path / "d.jsonl", recs), tmp_path / "f.sfv")
    np.testing.assert_array_equal(data[0].features, matrix[2].astype(np.float64))
    np.testing.assert_array_equal(data[1].features, matrix[0].astype(np.float64))


def test_missing_feature_ref_names_id(tmp_path):
    D.write_feature_file(tmp_path / "f.sfv", ["a"], np.ones((1, 4)))
    rec = make_record(0)
    del rec["features"]
    rec["features_ref"] = "zzz"
    with pytest.raises(FeatureLookupError, match="zzz"):
        D.load_dataset(write_jsonl(tmp_path / "d.jsonl", [rec]), tmp_path / "f.sfv")


def test_bad_feature_magic(tmp_path):
    (tmp_path / "f.sfv").write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(ParseError, match="magic"):
        D.read_feature_file(tmp_path / "f.sfv")


def _dp(title, desc, score=0.0, label=None, i=0):
    return D.Datapoint(str(i), title, desc, "nice smile", score, np.zeros(2), label)


def test_filter_word_threshold():
    nine = _dp("a b", "c d e f g h i")
    ten = _dp("a b", "c d e f g h i j")
    assert D.filter_datapoints([nine]) == []
    assert D.filter_datapoints([ten]) == [ten]
    assert D.filter_datapoints([]) == []


@given(st.lists(st.integers(0, 20), max_size=20))
def test_filter_shrinks_and_is_idempotent(counts):
    data = [_dp("", " ".join("w" * (k + 1) for k in range(n)), i=i) for i, n in enumerate(counts)]
    once = D.filter_datapoints(data)
    assert len(once) <= len(data)
    assert D.filter_datapoints(once) == once
    assert [d.id for d in once] == [d.id for d in data if len(d.description.split()) >= 10]


def test_filter_language_hook():
    data = [_dp("a b c d e", "f g h i j", i=0), _dp("a b c d e", "f g h i j", i=1)]
    assert D.filter_datapoints(data, language_filter=lambda d: d.id == "1") == [data[1]]


@pytest.mark.parametrize(
    "score,label",
    [(2.019, "positive"), (-2.128, "negative"), (0.0, "neutral"), (0.035, "positive"), (-0.035, "negative"),
     (0.034, "neutral"), (-0.034, "neutral"), (0.0349, "neutral"), (2.16, "positive"), (-2.022, "negative")],
)
def test_label_from_score(score, label):
    assert D.label_from_anp_score(score) == label


def test_label_rejects_non_finite():
    for bad in (float("nan"), float("inf")):
        with pytest.raises(ContractError):
            D.label_from_anp_score(bad)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_label_is_monotone(a, b):
    lo, hi = sorted((a, b))
    assert D.LABEL_RANK[D.label_from_anp_score(lo)] <= D.LABEL_RANK[D.label_from_anp_score(hi)]


def test_two_class_and_balance():
    data = D.label_datapoints([_dp("", "", s, i=i) for i, s in enumerate([1, 1, 1, 1, -1, -1, 0, 0, 0])])
    two = D.drop_neutral(data)
    assert {d.label for d in two} == {"positive", "negative"}
    balanced = D.balance_classes(two, seed=3)
    assert Counter(d.label for d in balanced) == {"positive": 2, "negative": 2}
    assert D.balance_classes(two, seed=3) == balanced
    positions = [two.index(d) for d in balanced]
    assert positions == sorted(positions)


def test_split_sizes_100():
    train, val, test = D.split_dataset(list(range(100)), D.SplitConfig(seed=5))
    assert (len(train), len(val), len(test)) == (70, 20, 10)


@given(st.integers(10, 400), st.integers(0, 2**32 - 1))
def test_split_is_partition_and_reproducible(n, seed):
    items = list(range(n))
    parts = D.split_dataset(items, D.SplitConfig(seed=seed))
    assert sorted(parts[0] + parts[1] + parts[2]) == items
    assert D.split_dataset(items, D.SplitConfig(seed=seed)) == parts
    assert (len(parts[0]), len(parts[1])) == (int(0.7 * n + 1e-9), int(0.2 * n + 1e-9))


def test_split_too_small():
    with pytest.raises(ContractError):
        D.split_dataset(list(range(9)))
    with pytest.raises(ContractError):
        D.SplitConfig(0.5, 0.5, 0.5)


def test_batch_iter():
    sizes = [len(b) for b in D.batch_iter(list(range(130)), 64, seed=1)]
    assert sizes == [64, 64, 2]
    a = list(D.batch_iter(list(range(130)), 64, seed=1, epoch=3))
    assert a == list(D.batch_iter(list(range(130)), 64, seed=1, epoch=3))
    assert a != list(D.batch_iter(list(range(130)), 64, seed=1, epoch=4))
    singles = list(D.batch_iter(list(range(7)), 1, seed=0))
    assert len(singles) == 7 and sorted(b[0] for b in singles) == list(range(7))
    with pytest.raises(ContractError):
        list(D.batch_iter([1], 0))


def test_glove_parse(tmp_path):
    values = [f"{0.1 * (i + 1):.4f}" for i in range(50)]
    path = tmp_path / "g.txt"
    path.write_text("positive " + " ".join(values) + "\nnegative " + " ".join(values[::-1]) + "\n")
    table = D.load_glove(path, 50)
    assert len(table["positive"]) == 50
    assert table["positive"].tolist() == [float(v) for v in values]


def test_glove_wrong_count(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("a " + " ".join(["0.5"] * 50) + "\nb " + " ".join(["0.5"] * 49) + "\n")
    with pytest.raises(ParseError, match="line 2"):
        D.load_glove(path, 50)


def test_glove_empty_and_duplicates(tmp_path):
    (tmp_path / "e.txt").write_text("")
    table = D.load_glove(tmp_path / "e.txt", 50)
    assert len(table) == 0
    with pytest.raises(KeyError, match="positive"):
        table["positive"]
    (tmp_path / "d.txt").write_text("x 1 2\nx 3 4\n")
    assert D.load_glove(tmp_path / "d.txt", 2)["x"].tolist() == [3.0, 4.0]


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3))
def test_glove_roundtrip_bit_exact(vals):
    table = D.EmbeddingTable(3, {"tok": np.array(vals)})
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "g.txt")
        D.save_glove(path, table)
        back = D.load_glove(path, 3)["tok"]
    assert back.tobytes() == np.array(vals, dtype=np.float64).tobytes()
