"""Zipf-skewed key-value datasets standing in for TPC-H-SKEW line items."""

from __future__ import annotations

import math
import string
from dataclasses import dataclass

import numpy as np

from .core import Dataset, Record, RecordKind, VeilError

_ALPHABET = np.frombuffer((string.ascii_letters + string.digits).encode(), dtype=np.uint8)


class InvalidSpec(VeilError, ValueError):
    pass


@dataclass(frozen=True)
class SkewSpec:
    num_keys: int
    num_records: int
    z: float = 0.4
    seed: int = 0
    value_width: int = 16


def zipf_counts(num_keys: int, num_records: int, z: float) -> list[int]:
    """Per-rank record counts: one each, then the rest split by largest remainder of ``i**-z``."""
    if num_keys < 1 or num_keys > num_records:
        raise InvalidSpec(f"need 1 <= keys ({num_keys}) <= records ({num_records})")
    if z < 0:
        raise InvalidSpec("skew must be >= 0")
    weights = [i ** -z for i in range(1, num_keys + 1)]
    total = math.fsum(weights)
    rest = num_records - num_keys
    quotas = [rest * w / total for w in weights]
    counts = [math.floor(q) for q in quotas]
    left = rest - sum(counts)
    by_remainder = sorted(range(num_keys), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in by_remainder[:left]:
        counts[i] += 1
    return [c + 1 for c in counts]


def key_name(rank: int, num_keys: int) -> bytes:
    return f"k{rank:0{len(str(num_keys))}d}".encode()


def generate(spec: SkewSpec) -> Dataset:
    """Deterministic dataset: key ``k1`` is the heaviest, values are random alphanumerics."""
    counts = zipf_counts(spec.num_keys, spec.num_records, spec.z)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    values = _ALPHABET[rng.integers(0, len(_ALPHABET), size=(spec.num_records, spec.value_width))]
    keys = [key_name(rank, spec.num_keys) for rank, c in enumerate(counts, 1) for _ in range(c)]
    order = rng.permutation(spec.num_records)
    records = [Record(keys[j], values[j].tobytes(), RecordKind.REAL, i) for i, j in enumerate(order)]
    return Dataset(records)
