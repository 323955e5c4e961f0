"""Key to bucket-id mapping (MAP).

Bucket ids for a key are ``H(salt || key || 0x00 || gamma) mod n`` for
``gamma = 1..f`` with ``gamma`` encoded as a 4-byte big-endian integer.
When an id repeats, the message is extended with a 4-byte big-endian retry
counter (1, 2, ...) until a fresh id appears, so the result always holds
``f`` distinct ids.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .core import VeilError

DEFAULT_HASH = "sha256"


class FanoutExceedsBuckets(VeilError, ValueError):
    pass


@dataclass(frozen=True)
class MapConfig:
    n: int
    f: int
    hash_name: str = DEFAULT_HASH
    salt: bytes = b""

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("bucket count must be >= 1")
        if self.f < 1:
            raise ValueError("fanout must be >= 1")
        if self.f > self.n:
            raise FanoutExceedsBuckets(f"fanout {self.f} exceeds bucket count {self.n}")
        hashlib.new(self.hash_name)  # fail fast on unknown identifiers


def _h(cfg: MapConfig, msg: bytes) -> int:
    return int.from_bytes(hashlib.new(cfg.hash_name, msg).digest(), "big") % cfg.n


def map_key(key: bytes, cfg: MapConfig) -> list[int]:
    """Return the ``cfg.f`` distinct bucket ids assigned to ``key``."""
    if not key:
        raise ValueError("key must be non-empty")
    ids: list[int] = []
    for gamma in range(1, cfg.f + 1):
        msg = cfg.salt + key + b"\x00" + gamma.to_bytes(4, "big")
        bid = _h(cfg, msg)
        retry = 0
        while bid in ids:
            retry += 1
            bid = _h(cfg, msg + retry.to_bytes(4, "big"))
        ids.append(bid)
    return ids


class CachedMap:
    """Memoizes ``map_key`` per key; bucket creation hits each key many times."""

    def __init__(self, cfg: MapConfig):
        self.cfg = cfg
        self._cache: dict[bytes, list[int]] = {}

    def __call__(self, key: bytes) -> list[int]:
        ids = self._cache.get(key)
        if ids is None:
            ids = self._cache[key] = map_key(key, self.cfg)
        return ids
