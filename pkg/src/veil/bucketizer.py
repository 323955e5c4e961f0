"""Layout computation, randomized bucket creation with a stash, and disjoint padding."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .core import Bucket, Dataset, EmptyDataset, Layout, Params, Record
from .mapper import CachedMap, MapConfig

if TYPE_CHECKING:
    from .overlap import OverlapPlan


def compute_layout(params: Params, size: int, l_max: int) -> Layout:
    """Bucket size ``ceil(QA*L_max/f)`` and bucket count ``ceil(SA*|D|/bucket_size)``."""
    if size < 1 or l_max < 1:
        raise EmptyDataset("cannot lay out an empty dataset")
    bucket_size = math.ceil(params.qa * l_max / params.fanout)
    bucket_count = math.ceil(params.sa * size / bucket_size)
    return Layout(bucket_size, bucket_count)


@dataclass
class BucketSet:
    buckets: list[Bucket]
    stash: list[Record]
    layout: Layout
    map_cfg: MapConfig
    overlap: "OverlapPlan | None" = None
    _fake_ids: itertools.count = field(default_factory=lambda: itertools.count(1), repr=False)

    @property
    def bucket_size(self) -> int:
        return self.layout.bucket_size

    @property
    def n(self) -> int:
        return len(self.buckets)

    def new_fake(self) -> Record:
        # negative uids keep fakes distinct from each other and from real records
        return Record.fake(-next(self._fake_ids))

    def sizes(self) -> list[int]:
        return [len(b.slots) for b in self.buckets]

    def home_records(self) -> list[Record]:
        return [r for b in self.buckets for r in b.home]

    def stored_records(self) -> list[Record]:
        """Distinct records held server side; borrowed references are not double counted."""
        return [r for b in self.buckets for r in b.slots]

    def fake_count(self) -> int:
        return sum(b.fake_count for b in self.buckets)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def build_buckets(dataset: Dataset, layout: Layout, params: Params,
                  rng: np.random.Generator | None = None, salt: bytes = b"",
                  hash_name: str = "sha256") -> BucketSet:
    """Shuffle the dataset, then place each record in the least-full of its f buckets.

    Ties go to the bucket listed first by the map. A record whose buckets are
    all at capacity lands in the stash.
    """
    if rng is None:
        rng = make_rng(params.seed)
    cfg = MapConfig(layout.bucket_count, params.fanout, hash_name, salt)
    mapping = CachedMap(cfg)
    cap = layout.bucket_size
    buckets = [Bucket(i) for i in range(layout.bucket_count)]
    loads = [0] * layout.bucket_count
    stash: list[Record] = []
    records = dataset.records
    for idx in rng.permutation(len(records)):
        rec = records[idx]
        best = min(mapping(rec.key), key=loads.__getitem__)
        if loads[best] < cap:
            buckets[best].slots.append(rec)
            loads[best] += 1
        else:
            stash.append(rec)
    return BucketSet(buckets, stash, layout, cfg)


def pad_disjoint(bs: BucketSet) -> BucketSet:
    """Fill every bucket up to the bucket size with fake records (in place; returns ``bs``)."""
    cap = bs.bucket_size
    for b in bs.buckets:
        if len(b.slots) > cap:
            raise ValueError(f"bucket {b.id} exceeds capacity")
        b.slots.extend(bs.new_fake() for _ in range(cap - len(b.slots)))
    return bs
