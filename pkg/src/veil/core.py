"""Domain types shared by the VEIL modules: records, datasets, parameters, layouts, buckets."""

from __future__ import annotations

import enum
import os
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

DEFAULT_RECORD_WIDTH = 64

# Fake records carry this key; ingestion rejects empty keys so no real record can collide.
FAKE_KEY = b""


class VeilError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParams(VeilError, ValueError):
    pass


class EmptyDataset(VeilError, ValueError):
    pass


class DatasetFormatError(VeilError, ValueError):
    pass


class RecordTooLarge(VeilError, ValueError):
    pass


class RecordKind(enum.IntEnum):
    FAKE = 0
    REAL = 1


@dataclass(frozen=True)
class Record:
    """A key-value pair. ``uid`` disambiguates otherwise identical pairs."""

    key: bytes
    value: bytes
    kind: RecordKind = RecordKind.REAL
    uid: int = 0

    @property
    def is_fake(self) -> bool:
        return self.kind is RecordKind.FAKE

    @classmethod
    def fake(cls, uid: int) -> "Record":
        return cls(FAKE_KEY, b"", RecordKind.FAKE, uid)

    def pair(self) -> tuple[bytes, bytes]:
        return self.key, self.value


def _as_bytes(x: bytes | str) -> bytes:
    return x.encode("utf-8") if isinstance(x, str) else bytes(x)


@dataclass
class Dataset:
    """A multiset of real key-value records."""

    records: list[Record]

    def __post_init__(self):
        for r in self.records:
            if r.is_fake:
                raise DatasetFormatError("datasets hold real records only")
            if r.key == FAKE_KEY:
                raise DatasetFormatError("empty keys are reserved")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[bytes | str, bytes | str]]) -> "Dataset":
        return cls([Record(_as_bytes(k), _as_bytes(v), RecordKind.REAL, i)
                    for i, (k, v) in enumerate(pairs)])

    @classmethod
    def load_tsv(cls, path: str | os.PathLike) -> "Dataset":
        pairs = []
        with open(path, "r", encoding="utf-8", newline="\n") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n").rstrip("\r")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0]:
                    raise DatasetFormatError(f"{path}:{lineno}: expected 'key<TAB>value'")
                pairs.append((parts[0], parts[1]))
        return cls.from_pairs(pairs)

    def dump_tsv(self, path: str | os.PathLike) -> None:
        Path(path).write_text(to_tsv(self.records), encoding="utf-8")

    @property
    def counts(self) -> Counter:
        return Counter(r.key for r in self.records)

    @property
    def keys(self) -> set[bytes]:
        return set(self.counts)

    @property
    def size(self) -> int:
        return len(self.records)

    @property
    def l_max(self) -> int:
        counts = self.counts
        return max(counts.values()) if counts else 0

    def __len__(self) -> int:
        return len(self.records)


def to_tsv(records: Iterable[Record]) -> str:
    lines = []
    for r in records:
        k, v = r.key.decode("utf-8"), r.value.decode("utf-8")
        if "\t" in k + v or "\n" in k + v:
            raise DatasetFormatError("keys and values must not contain TAB or newline")
        lines.append(f"{k}\t{v}\n")
    return "".join(lines)


def _fraction(x) -> Fraction:
    # str() keeps 1.2 as 6/5 instead of the binary float expansion
    return x if isinstance(x, Fraction) else Fraction(str(x))


@dataclass(frozen=True)
class Params:
    """User-facing knobs. ``degree == 0`` selects disjoint padding."""

    qa: Fraction = Fraction(1)
    sa: Fraction = Fraction(1)
    fanout: int = 1
    degree: int = 0
    desired_overlap: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "qa", _fraction(self.qa))
        object.__setattr__(self, "sa", _fraction(self.sa))
        if self.qa < 1:
            raise InvalidParams(f"QA must be >= 1, got {self.qa}")
        if self.sa < 1:
            raise InvalidParams(f"SA must be >= 1, got {self.sa}")
        if self.fanout < 1:
            raise InvalidParams(f"fanout must be >= 1, got {self.fanout}")
        if self.degree < 0:
            raise InvalidParams(f"degree must be >= 0, got {self.degree}")
        if self.desired_overlap is not None:
            if self.desired_overlap < 0:
                raise InvalidParams("desired overlap must be >= 0")
            if self.degree == 0:
                raise InvalidParams("desired overlap requires degree >= 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidParams("seed must fit in 64 bits")


@dataclass(frozen=True)
class Layout:
    bucket_size: int
    bucket_count: int


@dataclass
class Bucket:
    """``slots`` is the ordered home+fake list; ``borrowed`` references records owned by lenders."""

    id: int
    slots: list[Record] = field(default_factory=list)
    borrowed: list[Record] = field(default_factory=list)

    @property
    def effective(self) -> list[Record]:
        return self.slots + self.borrowed

    @property
    def home(self) -> list[Record]:
        return [r for r in self.slots if not r.is_fake]

    @property
    def fake_count(self) -> int:
        return sum(1 for r in self.slots if r.is_fake)

    def __len__(self) -> int:
        return len(self.slots) + len(self.borrowed)


@dataclass
class Metrics:
    qa_actual: float
    sa_actual: float
    sr: float
    csa: float = 0.0
    ssa: float = 0.0

    def as_dict(self) -> dict:
        return {"qa_actual": self.qa_actual, "sa_actual": self.sa_actual, "sr": self.sr,
                "csa": self.csa, "ssa": self.ssa}


# -- fixed-width plaintext encoding -------------------------------------------------------

_REAL_OVERHEAD = 1 + 2 + 2 + 8


def encode_record(record: Record, width: int = DEFAULT_RECORD_WIDTH) -> bytes:
    """Pack a record into exactly ``width`` bytes, padding with random bytes."""
    if record.is_fake:
        return bytes([RecordKind.FAKE]) + os.urandom(width - 1)
    body = (bytes([RecordKind.REAL])
            + len(record.key).to_bytes(2, "big") + record.key
            + len(record.value).to_bytes(2, "big") + record.value
            + (record.uid % 2**64).to_bytes(8, "big"))
    if len(body) > width:
        raise RecordTooLarge(f"record needs {len(body)} bytes, width is {width}")
    return body + os.urandom(width - len(body))


def decode_record(data: bytes) -> Record:
    if data[0] == RecordKind.FAKE:
        return Record.fake(0)
    klen = int.from_bytes(data[1:3], "big")
    key = data[3:3 + klen]
    pos = 3 + klen
    vlen = int.from_bytes(data[pos:pos + 2], "big")
    value = data[pos + 2:pos + 2 + vlen]
    uid = int.from_bytes(data[pos + 2 + vlen:pos + 10 + vlen], "big")
    return Record(key, value, RecordKind.REAL, uid)


def required_width(records: Iterable[Record]) -> int:
    return max((_REAL_OVERHEAD + len(r.key) + len(r.value) for r in records), default=_REAL_OVERHEAD)
