"""Encrypted record store plus per-bucket RID index, and their on-disk format.

Layout of a bundle directory (all integers big-endian):

* ``meta.json``   public parameters, file digests and a checksum over both
* ``records.bin`` repeated ``RID (8) | length (4) | ciphertext``
* ``index.bin``   repeated ``bucket id (4) | count (4) | RID (8) * count``

Client state lives next to it in ``client.json`` and ``stash.tsv``.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import secrets
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .bucketizer import BucketSet
from .core import (DEFAULT_RECORD_WIDTH, Dataset, Record, VeilError, decode_record,
                   encode_record, to_tsv)
from .mapper import MapConfig

FORMAT_VERSION = 1
NONCE_LEN = 12
TAG_LEN = 16
KEY_LEN = 16

META_FILE, RECORDS_FILE, INDEX_FILE = "meta.json", "records.bin", "index.bin"
CLIENT_FILE, STASH_FILE = "client.json", "stash.tsv"


class BundleError(VeilError):
    pass


class VersionMismatch(BundleError):
    pass


class ChecksumFailure(BundleError):
    pass


class TruncatedFile(BundleError):
    pass


class DecryptionFailure(VeilError):
    pass


def ciphertext_length(width: int) -> int:
    return NONCE_LEN + width + TAG_LEN


def new_key() -> bytes:
    return AESGCM.generate_key(bit_length=8 * KEY_LEN)


def encrypt_record(key: bytes, rid: int, record: Record, width: int) -> bytes:
    nonce = os.urandom(NONCE_LEN)
    return nonce + AESGCM(key).encrypt(nonce, encode_record(record, width), rid.to_bytes(8, "big"))


def decrypt_record(key: bytes, rid: int, blob: bytes) -> Record:
    try:
        plain = AESGCM(key).decrypt(blob[:NONCE_LEN], blob[NONCE_LEN:], rid.to_bytes(8, "big"))
    except InvalidTag:
        raise DecryptionFailure(f"ciphertext for RID {rid} failed authentication") from None
    return decode_record(plain)


@dataclass
class OutsourcedBundle:
    record_store: dict[int, bytes]
    mmap: list[list[int]]
    meta: dict

    @property
    def n(self) -> int:
        return len(self.mmap)

    def index_entries(self) -> int:
        return sum(len(rids) for rids in self.mmap)

    def duplicated_entries(self) -> int:
        return self.index_entries() - len({rid for rids in self.mmap for rid in rids})

    def __eq__(self, other) -> bool:
        if not isinstance(other, OutsourcedBundle):
            return NotImplemented
        return (self.record_store == other.record_store and self.mmap == other.mmap
                and self.meta == other.meta)


@dataclass
class ClientState:
    """Everything the client needs to query: map parameters, the cipher key, the stash."""

    n: int
    f: int
    bucket_size: int
    key: bytes
    stash: list[Record] = field(default_factory=list)
    hash_name: str = "sha256"
    salt: bytes = b""
    record_width: int = DEFAULT_RECORD_WIDTH
    qa: Fraction = Fraction(1)
    l_max: int = 0

    @property
    def map_cfg(self) -> MapConfig:
        return MapConfig(self.n, self.f, self.hash_name, self.salt)

    @property
    def capacity_per_key(self) -> Fraction:
        return self.qa * self.l_max


def encrypt_and_bundle(bs: BucketSet, key: bytes | None = None,
                       width: int = DEFAULT_RECORD_WIDTH, qa: Fraction = Fraction(1),
                       l_max: int = 0) -> tuple[OutsourcedBundle, ClientState]:
    """Encrypt each distinct stored record once and index buckets by RID.

    Borrowed records reuse the lender's RID, so a shared record appears in
    two bucket lists but only once in the record store.
    """
    key = key or new_key()
    owned = bs.stored_records()
    rids = list(range(len(owned)))
    random.SystemRandom().shuffle(rids)
    rid_of = {id(rec): rid for rec, rid in zip(owned, rids)}
    store = {rid_of[id(rec)]: encrypt_record(key, rid_of[id(rec)], rec, width) for rec in owned}
    mmap = [[rid_of[id(rec)] for rec in b.effective] for b in bs.buckets]
    plan = bs.overlap
    meta = {
        "format_version": FORMAT_VERSION,
        "n": bs.n,
        "f": bs.map_cfg.f,
        "bucket_size": bs.bucket_size,
        "degree": plan.d if plan else 0,
        "overlap": plan.delta if plan else 0,
        "hash": bs.map_cfg.hash_name,
        "record_width": width,
        "ciphertext_length": ciphertext_length(width),
    }
    client = ClientState(bs.n, bs.map_cfg.f, bs.bucket_size, key, list(bs.stash),
                         bs.map_cfg.hash_name, bs.map_cfg.salt, width, Fraction(qa), l_max)
    return OutsourcedBundle(store, mmap, meta), client


# -- serialization ----------------------------------------------------------------------

def _records_bytes(store: dict[int, bytes]) -> bytes:
    parts = []
    for rid in sorted(store):
        ct = store[rid]
        parts.append(struct.pack(">QI", rid, len(ct)) + ct)
    return b"".join(parts)


def _index_bytes(mmap: list[list[int]]) -> bytes:
    parts = []
    for bid, rids in enumerate(mmap):
        parts.append(struct.pack(">II", bid, len(rids)))
        parts.append(struct.pack(f">{len(rids)}Q", *rids))
    return b"".join(parts)


def _meta_checksum(meta: dict) -> str:
    body = {k: v for k, v in meta.items() if k != "checksum"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def serialize(bundle: OutsourcedBundle) -> dict[str, bytes]:
    records = _records_bytes(bundle.record_store)
    index = _index_bytes(bundle.mmap)
    meta = dict(bundle.meta)
    meta["records_sha256"] = hashlib.sha256(records).hexdigest()
    meta["index_sha256"] = hashlib.sha256(index).hexdigest()
    meta["checksum"] = _meta_checksum(meta)
    meta_bytes = (json.dumps(meta, sort_keys=True, indent=2) + "\n").encode()
    return {META_FILE: meta_bytes, RECORDS_FILE: records, INDEX_FILE: index}


def store_bundle(bundle: OutsourcedBundle, path: str | os.PathLike) -> None:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    for name, data in serialize(bundle).items():
        (out / name).write_bytes(data)


def _parse_records(data: bytes) -> dict[int, bytes]:
    store, pos = {}, 0
    while pos < len(data):
        if pos + 12 > len(data):
            raise TruncatedFile("records.bin ends inside a record header")
        rid, length = struct.unpack_from(">QI", data, pos)
        pos += 12
        if pos + length > len(data):
            raise TruncatedFile("records.bin ends inside a ciphertext")
        store[rid] = data[pos:pos + length]
        pos += length
    return store


def _parse_index(data: bytes) -> list[list[int]]:
    mmap, pos = [], 0
    while pos < len(data):
        if pos + 8 > len(data):
            raise TruncatedFile("index.bin ends inside a bucket header")
        bid, count = struct.unpack_from(">II", data, pos)
        pos += 8
        if pos + 8 * count > len(data):
            raise TruncatedFile("index.bin ends inside a RID list")
        if bid != len(mmap):
            raise ChecksumFailure(f"index.bin lists bucket {bid} out of order")
        mmap.append(list(struct.unpack_from(f">{count}Q", data, pos)))
        pos += 8 * count
    return mmap


def load_bundle(path: str | os.PathLike) -> OutsourcedBundle:
    src = Path(path)
    raw_meta = (src / META_FILE).read_bytes()
    try:
        meta = json.loads(raw_meta)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChecksumFailure(f"meta.json is unreadable: {exc}") from None
    if not isinstance(meta, dict):
        raise ChecksumFailure("meta.json is not an object")
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"bundle format {version!r}, expected {FORMAT_VERSION}")
    if meta.get("checksum") != _meta_checksum(meta):
        raise ChecksumFailure("meta.json checksum mismatch")
    records = (src / RECORDS_FILE).read_bytes()
    index = (src / INDEX_FILE).read_bytes()
    if hashlib.sha256(records).hexdigest() != meta["records_sha256"]:
        raise ChecksumFailure("records.bin digest mismatch")
    if hashlib.sha256(index).hexdigest() != meta["index_sha256"]:
        raise ChecksumFailure("index.bin digest mismatch")
    for k in ("records_sha256", "index_sha256", "checksum"):
        meta.pop(k)
    return OutsourcedBundle(_parse_records(records), _parse_index(index), meta)


def save_client(client: ClientState, path: str | os.PathLike) -> None:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    state = {
        "n": client.n, "f": client.f, "bucket_size": client.bucket_size,
        "key": client.key.hex(), "hash": client.hash_name, "salt": client.salt.hex(),
        "record_width": client.record_width, "qa": str(client.qa), "l_max": client.l_max,
    }
    (out / CLIENT_FILE).write_text(json.dumps(state, indent=2, sort_keys=True) + "\n")
    (out / STASH_FILE).write_text(to_tsv(client.stash), encoding="utf-8")


def load_client(path: str | os.PathLike) -> ClientState:
    src = Path(path)
    state = json.loads((src / CLIENT_FILE).read_text())
    stash_path = src / STASH_FILE
    stash = []
    if stash_path.exists() and stash_path.stat().st_size:
        stash = [Record(r.key, r.value, r.kind, secrets.randbits(62))
                 for r in Dataset.load_tsv(stash_path).records]
    return ClientState(state["n"], state["f"], state["bucket_size"], bytes.fromhex(state["key"]),
                       stash, state["hash"], bytes.fromhex(state["salt"]), state["record_width"],
                       Fraction(state["qa"]), state["l_max"])
