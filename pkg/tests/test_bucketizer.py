from collections import Counter

import pytest
from hypothesis import given, strategies as st

from bucket_oracle import replay_buckets
from veil.bucketizer import BucketSet, build_buckets, compute_layout, make_rng, pad_disjoint
from veil.core import Bucket, Dataset, EmptyDataset, Layout, Params, Record
from veil.mapper import MapConfig, map_key


@pytest.mark.parametrize("qa, l_max, f, sa, size, expected", [
    (1, 4, 2, 1, 8, Layout(2, 4)),
    (1.5, 4, 2, 1, 8, Layout(3, 3)),
    (1, 357, 6, 1.2, 6_000_000, Layout(60, 120_000)),
])
def test_layout(qa, l_max, f, sa, size, expected):
    assert compute_layout(Params(qa=qa, sa=sa, fanout=f), size, l_max) == expected


def test_layout_empty():
    with pytest.raises(EmptyDataset):
        compute_layout(Params(), 0, 0)


def _ten():
    return Dataset.from_pairs([(f"k{i % 3}", f"v{i}") for i in range(10)])


@pytest.mark.parametrize("n, f, cap, expected_buckets, expected_stash", [
    # frozen output of tests/oracles/bucket_oracle.py, computed before build_buckets existed
    (4, 2, 3, [["v7", "v4"], ["v8", "v5", "v2"], ["v0", "v3"], ["v6", "v1", "v9"]], []),
    (5, 2, 2, [["v7", "v4"], [], ["v6", "v0"], [], ["v8", "v5"]], ["v1", "v3", "v9", "v2"]),
])
def test_ten_record_replay(n, f, cap, expected_buckets, expected_stash):
    ds = _ten()
    rng = make_rng(7)
    salt = rng.bytes(16)
    bs = build_buckets(ds, Layout(cap, n), Params(fanout=f, seed=7), rng, salt=salt)
    got = [[r.value.decode() for r in b.slots] for b in bs.buckets]
    assert got == expected_buckets
    assert [r.value.decode() for r in bs.stash] == expected_stash
    oracle = replay_buckets([r.pair() for r in ds.records], n, f, cap, 7)
    assert got == [[v.decode() for v in b] for b in oracle[0]]


def test_single_key_single_bucket():
    ds = Dataset.from_pairs([("k", str(i)) for i in range(4)])
    p = Params(qa=1, sa=1, fanout=1)
    layout = compute_layout(p, ds.size, ds.l_max)
    assert layout == Layout(4, 1)
    bs = build_buckets(ds, layout, p)
    assert len(bs.buckets[0].slots) == 4 and bs.stash == []


def test_colliding_keys_overflow_to_stash():
    # with one bucket both keys collide on bucket 0
    ds = Dataset.from_pairs([("k1", "a"), ("k1", "b"), ("k2", "c"), ("k2", "d")])
    bs = build_buckets(ds, Layout(2, 1), Params(fanout=1, seed=3))
    order = make_rng(3).permutation(4)
    assert bs.buckets[0].slots == [ds.records[i] for i in order[:2]]
    assert bs.stash == [ds.records[i] for i in order[2:]]


datasets = st.lists(st.tuples(st.sampled_from("abcdefgh"), st.text("xyz", max_size=3)),
                    min_size=1, max_size=60)


@given(datasets, st.integers(1, 4), st.sampled_from([1, 1.2, 1.5]), st.integers(0, 2**32))
def test_placement_invariants(pairs, f, sa, seed):
    ds = Dataset.from_pairs(pairs)
    p = Params(qa=1, sa=sa, fanout=f, seed=seed)
    layout = compute_layout(p, ds.size, ds.l_max)
    if f > layout.bucket_count:
        return
    bs = build_buckets(ds, layout, p, salt=b"s")
    placed = [r for b in bs.buckets for r in b.slots] + bs.stash
    assert Counter(r.uid for r in placed) == Counter(r.uid for r in ds.records)
    for b in bs.buckets:
        assert len(b.slots) <= layout.bucket_size
        for r in b.slots:
            assert b.id in map_key(r.key, bs.map_cfg)
    pad_disjoint(bs)
    assert set(bs.sizes()) == {layout.bucket_size}


def _bucket_set(sizes, cap):
    buckets = [Bucket(i, [Record(b"k", str(j).encode(), uid=10 * i + j) for j in range(s)])
               for i, s in enumerate(sizes)]
    return BucketSet(buckets, [], Layout(cap, len(sizes)), MapConfig(len(sizes), 1))


@pytest.mark.parametrize("sizes, cap, fakes", [
    ((1, 2, 0), 2, [1, 0, 2]),
    ((4, 2, 1, 3), 4, [0, 2, 3, 1]),
    ((3, 3), 3, [0, 0]),
])
def test_pad_disjoint(sizes, cap, fakes):
    bs = pad_disjoint(_bucket_set(sizes, cap))
    assert [b.fake_count for b in bs.buckets] == fakes
    assert bs.sizes() == [cap] * len(sizes)


def test_fakes_are_distinct():
    bs = pad_disjoint(_bucket_set((0, 0), 3))
    fakes = [r for b in bs.buckets for r in b.slots]
    assert len(set(fakes)) == 6
