"""Setup orchestration, server-side bucket fetch, client-side query filtering and updates."""

from __future__ import annotations

import secrets
import warnings
from collections import Counter
from dataclasses import dataclass, replace

from .bucketizer import BucketSet, build_buckets, compute_layout, make_rng, pad_disjoint
from .core import (DEFAULT_RECORD_WIDTH, Dataset, Layout, Params, Record, RecordKind,
                   VeilError, required_width)
from .mapper import map_key
from .outsource import (ClientState, OutsourcedBundle, decrypt_record, encrypt_and_bundle,
                        encrypt_record)
from .overlap import apply_desired_overlap, pad_overlap


class BucketIdOutOfRange(VeilError, IndexError):
    pass


class NotFound(VeilError, KeyError):
    pass


class CapacityWarning(UserWarning):
    pass


def layout_for(params: Params, dataset: Dataset) -> Layout:
    layout = compute_layout(params, dataset.size, dataset.l_max)
    # an odd degree needs an even bucket count; the extra bucket takes part in MAP like any other
    if params.degree % 2 and layout.bucket_count % 2:
        layout = replace(layout, bucket_count=layout.bucket_count + 1)
    return layout


def make_buckets(dataset: Dataset, params: Params, salt: bytes | None = None,
                 hash_name: str = "sha256") -> BucketSet:
    """Bucket creation plus the padding selected by ``params`` (disjoint, overlap, fixed overlap)."""
    rng = make_rng(params.seed)
    if salt is None:
        salt = rng.bytes(16)
    layout = layout_for(params, dataset)
    bs = build_buckets(dataset, layout, params, rng, salt=salt, hash_name=hash_name)
    if params.degree == 0:
        return pad_disjoint(bs)
    pad_overlap(bs, params.degree)
    if params.desired_overlap is not None:
        apply_desired_overlap(bs, params.desired_overlap)
    return bs


def setup(dataset: Dataset, params: Params, key: bytes | None = None,
          width: int | None = None, salt: bytes | None = None) -> tuple[OutsourcedBundle, ClientState, BucketSet]:
    bs = make_buckets(dataset, params, salt)
    if width is None:
        width = max(DEFAULT_RECORD_WIDTH, required_width(dataset.records))
    bundle, client = encrypt_and_bundle(bs, key, width, params.qa, dataset.l_max)
    return bundle, client, bs


# -- server side ------------------------------------------------------------------------

def fetch_buckets(bundle: OutsourcedBundle, bucket_ids: list[int]) -> list[tuple[int, bytes]]:
    """Every (RID, ciphertext) slot of the requested buckets, in request then index order."""
    out = []
    for bid in bucket_ids:
        if not 0 <= bid < bundle.n:
            raise BucketIdOutOfRange(f"bucket id {bid} not in [0, {bundle.n})")
        out.extend((rid, bundle.record_store[rid]) for rid in bundle.mmap[bid])
    return out


# -- client side ------------------------------------------------------------------------

@dataclass
class QueryResult:
    records: list[Record]
    fetched_count: int
    touched_buckets: list[int]


def _as_key(key: bytes | str) -> bytes:
    return key.encode("utf-8") if isinstance(key, str) else key


def query(client: ClientState, bundle: OutsourcedBundle, key: bytes | str) -> QueryResult:
    key = _as_key(key)
    ids = map_key(key, client.map_cfg)
    fetched = fetch_buckets(bundle, ids)
    seen: set[int] = set()
    found = []
    for rid, blob in fetched:
        rec = decrypt_record(client.key, rid, blob)
        # overlapping buckets can return one RID twice
        if rid in seen or rec.is_fake or rec.key != key:
            continue
        seen.add(rid)
        found.append(rec)
    found.extend(r for r in client.stash if r.key == key)
    return QueryResult(found, len(fetched), ids)


def _reencrypt_bucket(client: ClientState, bundle: OutsourcedBundle, bid: int,
                      replace_rid: int | None = None, new_record: Record | None = None) -> None:
    for rid in dict.fromkeys(bundle.mmap[bid]):
        rec = new_record if rid == replace_rid else decrypt_record(client.key, rid, bundle.record_store[rid])
        bundle.record_store[rid] = encrypt_record(client.key, rid, rec, client.record_width)


def _rid_refcounts(bundle: OutsourcedBundle, ids: list[int]) -> Counter:
    # only the RIDs of the fetched buckets matter; count their references across the whole index
    wanted = {rid for bid in ids for rid in bundle.mmap[bid]}
    return Counter(rid for rids in bundle.mmap for rid in rids if rid in wanted)


def insert(client: ClientState, bundle: OutsourcedBundle, key: bytes | str,
           value: bytes | str) -> tuple[ClientState, OutsourcedBundle]:
    """Store a new record in a fake slot of one of the key's buckets, else in the stash."""
    key, value = _as_key(key), _as_key(value)
    if not key:
        raise ValueError("key must be non-empty")
    record = Record(key, value, RecordKind.REAL, secrets.randbits(62))
    current = query(client, bundle, key)
    ids = current.touched_buckets
    if client.l_max and len(current.records) + 1 > client.capacity_per_key:
        warnings.warn(f"key {key!r} exceeds QA*L_max = {client.capacity_per_key}; storing in stash",
                      CapacityWarning, stacklevel=2)
        client.stash.append(record)
        return client, bundle
    refs = _rid_refcounts(bundle, ids)
    for bid in ids:
        for rid in bundle.mmap[bid]:
            # a shared fake would leak the new record into a bucket outside MAP(key)
            if refs[rid] == 1 and decrypt_record(client.key, rid, bundle.record_store[rid]).is_fake:
                _reencrypt_bucket(client, bundle, bid, rid, record)
                return client, bundle
    client.stash.append(record)
    return client, bundle


def delete(client: ClientState, bundle: OutsourcedBundle, key: bytes | str,
           value: bytes | str) -> tuple[ClientState, OutsourcedBundle]:
    """Turn a stored record into a fresh fake, or drop it from the stash."""
    key, value = _as_key(key), _as_key(value)
    for bid in map_key(key, client.map_cfg):
        for rid in bundle.mmap[bid]:
            rec = decrypt_record(client.key, rid, bundle.record_store[rid])
            if not rec.is_fake and rec.pair() == (key, value):
                _reencrypt_bucket(client, bundle, bid, rid, Record.fake(0))
                return client, bundle
    for i, rec in enumerate(client.stash):
        if rec.pair() == (key, value):
            del client.stash[i]
            return client, bundle
    raise NotFound(f"no record ({key!r}, {value!r})")

