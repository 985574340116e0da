"""Account key-value state with Merkle commitments and version history.

Three commitment variants share one store API: a Patricia trie over hex
nibbles, a bucket hash tree (keys grouped into B buckets, Merkle tree of
bucket digests), and a plain sorted-dump digest used as a testing baseline.
Every write appends a versioned entry, so any past height can be queried
and the store can be rolled back across chain reorganizations.
"""

from __future__ import annotations

import hashlib
import json
from bisect import bisect_right
from dataclasses import dataclass
from functools import total_ordering
from typing import Optional

from . import trie

ZERO32 = b"\x00" * 32

DEFAULT_BUCKET_COUNT = 1009   # prime, spreads keys evenly
DEFAULT_FANOUT = 2

VARIANTS = ("patricia", "bucket", "plain")


def _h(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _field(b: bytes) -> bytes:
    return len(b).to_bytes(4, "big") + b


@total_ordering
@dataclass(frozen=True)
class StateKey:
    namespace: bytes
    key: bytes

    def __post_init__(self):
        if not (1 <= len(self.key) <= 256):
            raise ValueError("key length must be in 1..256 bytes")

    def bytes(self) -> bytes:
        return _field(self.namespace) + _field(self.key)

    def __lt__(self, other: "StateKey") -> bool:
        return (self.namespace, self.key) < (other.namespace, other.key)


@dataclass(frozen=True)
class VersionedEntry:
    value: Optional[bytes]    # None marks a deletion tombstone
    version: int
    commit_block: int


class HeightRegressionError(Exception):
    """Write at a height below the key's latest commit height."""


class StateStore:
    """One node's state: live map + commitment structure + full history."""

    def __init__(self, variant: str = "patricia",
                 bucket_count: int = DEFAULT_BUCKET_COUNT,
                 fanout: int = DEFAULT_FANOUT):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        if bucket_count <= 0 or fanout < 2:
            raise ValueError("bucket_count must be > 0 and fanout >= 2")
        self.variant = variant
        self.bucket_count = bucket_count
        self.fanout = fanout
        self.live: dict[StateKey, VersionedEntry] = {}
        self.history: dict[StateKey, list[VersionedEntry]] = {}
        self.reads = 0
        self.writes = 0
        self._write_log: list[tuple[int, StateKey]] = []
        self._trie_root = None
        self._buckets: list[dict] = [dict() for _ in range(bucket_count)] if variant == "bucket" else []
        self._bucket_hash: list[Optional[bytes]] = [ZERO32] * bucket_count if variant == "bucket" else []
        self._dirty_buckets: set[int] = set()

    # -- writes -----------------------------------------------------------

    def put(self, key: StateKey, value: bytes, height: int) -> int:
        if not isinstance(value, bytes):
            raise TypeError("values are byte strings")
        hist = self.history.setdefault(key, [])
        if hist and height < hist[-1].commit_block:
            raise HeightRegressionError(
                f"height {height} < latest commit {hist[-1].commit_block}")
        entry = VersionedEntry(value, len(hist) + 1, height)
        hist.append(entry)
        self.live[key] = entry
        self._write_log.append((height, key))
        self._apply(key, value)
        self.writes += 1
        return entry.version

    def delete(self, key: StateKey, height: int) -> bool:
        if key not in self.live:
            return False
        hist = self.history[key]
        if height < hist[-1].commit_block:
            raise HeightRegressionError(
                f"height {height} < latest commit {hist[-1].commit_block}")
        hist.append(VersionedEntry(None, len(hist) + 1, height))
        del self.live[key]
        self._write_log.append((height, key))
        self._apply(key, None)
        self.writes += 1
        return True

    # -- reads ------------------------------------------------------------

    def get(self, key: StateKey) -> Optional[bytes]:
        self.reads += 1
        entry = self.live.get(key)
        return entry.value if entry is not None else None

    def get_at(self, key: StateKey, height: int) -> Optional[bytes]:
        """Value of the greatest version committed at or before height."""
        self.reads += 1
        hist = self.history.get(key)
        if not hist:
            return None
        i = bisect_right(hist, height, key=lambda e: e.commit_block)
        if i == 0:
            return None
        return hist[i - 1].value

    def keys(self, namespace: Optional[bytes] = None) -> list[StateKey]:
        ks = self.live.keys() if namespace is None else (
            k for k in self.live if k.namespace == namespace)
        return sorted(ks)

    # -- commitment -------------------------------------------------------

    def root(self) -> bytes:
        if not self.live:
            return ZERO32
        if self.variant == "patricia":
            return trie.root_hash(self._trie_root)
        if self.variant == "bucket":
            return self._bucket_root()
        return self._plain_root()

    def _apply(self, key: StateKey, value: Optional[bytes]) -> None:
        if self.variant == "patricia":
            path = trie.nibbles_of(key.bytes())
            if value is None:
                self._trie_root = trie.delete(self._trie_root, path)
            else:
                self._trie_root = trie.insert(self._trie_root, path, _h(value))
        elif self.variant == "bucket":
            idx = int.from_bytes(_h(key.bytes()), "big") % self.bucket_count
            if value is None:
                self._buckets[idx].pop(key, None)
            else:
                self._buckets[idx][key] = value
            self._dirty_buckets.add(idx)

    def _bucket_root(self) -> bytes:
        for idx in sorted(self._dirty_buckets):
            bucket = self._buckets[idx]
            if not bucket:
                self._bucket_hash[idx] = ZERO32
            else:
                parts = []
                for k in sorted(bucket):
                    parts.append(_field(k.bytes()) + _field(bucket[k]))
                self._bucket_hash[idx] = _h(b"".join(parts))
        self._dirty_buckets.clear()
        level = list(self._bucket_hash)
        while len(level) > 1:
            level = [_h(b"".join(level[i:i + self.fanout]))
                     for i in range(0, len(level), self.fanout)]
        return level[0]

    def _plain_root(self) -> bytes:
        parts = []
        for k in sorted(self.live):
            parts.append(k.bytes() + _field(self.live[k].value))
        return _h(b"".join(parts))

    # -- reorg support ------------------------------------------------------

    def rollback(self, height: int) -> int:
        """Discard every write with commit_block > height; returns count undone."""
        keep = []
        drop_counts: dict[StateKey, int] = {}
        for item in self._write_log:
            if item[0] <= height:
                keep.append(item)
            else:
                drop_counts[item[1]] = drop_counts.get(item[1], 0) + 1
        if not drop_counts:
            return 0
        undone = 0
        for key in sorted(drop_counts):
            # Per-key histories are height-monotone, so dropped versions are
            # exactly the tail of the list.
            hist = self.history[key]
            del hist[len(hist) - drop_counts[key]:]
            undone += drop_counts[key]
            last = hist[-1] if hist else None
            if not hist:
                del self.history[key]
            if last is None or last.value is None:
                self.live.pop(key, None)
                self._apply(key, None)
            else:
                self.live[key] = last
                self._apply(key, last.value)
        self._write_log = keep
        return undone

    def max_committed_height(self) -> int:
        return max((h for h, _ in self._write_log), default=-1)

    # -- snapshot files -----------------------------------------------------

    def save_snapshot(self, path) -> None:
        """Append-only JSON-lines dump of the live map."""
        with open(path, "w") as fh:
            for k in sorted(self.live):
                e = self.live[k]
                fh.write(json.dumps({
                    "namespace": k.namespace.hex(),
                    "key": k.key.hex(),
                    "value": e.value.hex(),
                    "version": e.version,
                    "commit_block": e.commit_block,
                }, sort_keys=True) + "\n")

    @classmethod
    def load_snapshot(cls, path, variant: str = "patricia", **kwargs) -> "StateStore":
        store = cls(variant, **kwargs)
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                key = StateKey(bytes.fromhex(rec["namespace"]), bytes.fromhex(rec["key"]))
                entry = VersionedEntry(bytes.fromhex(rec["value"]), rec["version"], rec["commit_block"])
                store.live[key] = entry
                store.history[key] = [entry]
                store._write_log.append((entry.commit_block, key))
                store._apply(key, entry.value)
        store._write_log.sort(key=lambda t: t[0])
        return store
