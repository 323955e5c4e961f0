from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from veil.core import (Bucket, Dataset, DatasetFormatError, InvalidParams, Params, Record,
                       RecordKind, RecordTooLarge, decode_record, encode_record, required_width)


def test_params_keep_decimal_fractions_exact():
    p = Params(qa=1.5, sa=1.2, fanout=6)
    assert p.sa == Fraction(6, 5)
    assert p.qa == Fraction(3, 2)


@pytest.mark.parametrize("kwargs", [
    dict(qa=0.5), dict(sa=0.9), dict(fanout=0), dict(degree=-1),
    dict(degree=0, desired_overlap=2), dict(degree=2, desired_overlap=-1), dict(seed=-1),
])
def test_params_reject_invalid(kwargs):
    with pytest.raises(InvalidParams):
        Params(**kwargs)


def test_dataset_rejects_fakes_and_empty_keys():
    with pytest.raises(DatasetFormatError):
        Dataset([Record.fake(-1)])
    with pytest.raises(DatasetFormatError):
        Dataset.from_pairs([("", "v")])


def test_dataset_summary():
    ds = Dataset.from_pairs([("a", "1"), ("a", "2"), ("b", "3")])
    assert ds.size == 3 and ds.l_max == 2 and ds.keys == {b"a", b"b"}


def test_tsv_roundtrip(tmp_path):
    ds = Dataset.from_pairs([("a", "1"), ("a", "1"), ("ключ", "значение")])
    ds.dump_tsv(tmp_path / "d.tsv")
    back = Dataset.load_tsv(tmp_path / "d.tsv")
    assert [r.pair() for r in back.records] == [r.pair() for r in ds.records]


def test_tsv_bad_line(tmp_path):
    (tmp_path / "d.tsv").write_text("a\tb\nno-tab-here\n")
    with pytest.raises(DatasetFormatError, match=":2:"):
        Dataset.load_tsv(tmp_path / "d.tsv")


keys = st.binary(min_size=1, max_size=20)


@given(keys, st.binary(max_size=20), st.integers(0, 2**62))
def test_encoding_roundtrip(key, value, uid):
    rec = Record(key, value, RecordKind.REAL, uid)
    blob = encode_record(rec, 64)
    assert len(blob) == 64
    assert decode_record(blob) == rec


def test_fake_encodes_to_same_width():
    assert len(encode_record(Record.fake(-3), 64)) == 64
    assert decode_record(encode_record(Record.fake(-3), 64)).is_fake


def test_oversized_record_is_rejected_not_truncated():
    rec = Record(b"k", b"x" * 100)
    with pytest.raises(RecordTooLarge):
        encode_record(rec, 64)
    assert required_width([rec]) == 1 + 2 + 1 + 2 + 100 + 8


def test_bucket_views():
    real, fake, lent = Record(b"k", b"v"), Record.fake(-1), Record(b"j", b"w")
    b = Bucket(0, [real, fake], [lent])
    assert b.home == [real] and b.fake_count == 1
    assert b.effective == [real, fake, lent] and len(b) == 3
