"""Blocking: per-record token generation and a token -> record-id inverted index.

Nine token types compose normalized field fragments into loose keys, so a
query touches at most nine keys and the candidate union stays small. Keys
whose id-set exceeds the hot-key cap are excluded from candidate unions to
keep frequency skew (very common surnames) from blowing up candidate sets.
"""

from __future__ import annotations

import sqlite3
from dataclasses import dataclass
from typing import NamedTuple

from .errors import DataError, DuplicateIdError
from .phonetics import phonetic_code
from .records import NormalizedRecord


class BlockingToken(NamedTuple):
    token_type: int
    key: str


def tokens_for(r: NormalizedRecord) -> set:
    """Blocking tokens for a record: at most one per token type; a token is
    omitted when any constituent field is empty."""
    out = set()

    def emit(ttype, *parts):
        if all(parts):
            out.add(BlockingToken(ttype, "|".join(parts)))

    dob_ym = r.dob[:7] if len(r.dob) >= 7 else ""
    last_soundex = phonetic_code(r.last_name) if r.last_name else ""
    first_soundex = phonetic_code(r.first_name) if r.first_name else ""

    emit(1, r.first_name, r.last_name, r.zip)
    emit(2, r.state, r.city, last_soundex)
    emit(3, first_soundex, r.last_name[:1], r.zip)
    emit(4, r.email)
    emit(5, r.phone)
    emit(6, r.street_number, phonetic_code(r.street_name) if r.street_name else "", r.zip)
    emit(7, r.last_name, dob_ym)
    emit(8, first_soundex, last_soundex, r.state)
    emit(9, r.first_name[:1], r.last_name, r.city)
    return out


def _store_key(token: BlockingToken) -> str:
    return f"{token.token_type}:{token.key}"


@dataclass
class IndexStats:
    record_count: int = 0
    key_count: int = 0
    mean_ids_per_key: float = 0.0
    max_ids_per_key: int = 0
    hot_key_count: int = 0


class InMemoryBackend:
    """Plain dict store; lookups are read-only after build."""

    def __init__(self):
        self._data = {}

    def put(self, key: str, ids: list) -> None:
        self._data[key] = ids

    def get(self, key: str):
        return self._data.get(key)

    def key_sizes(self):
        return ((k, len(v)) for k, v in self._data.items())

    def close(self):
        pass


class SqliteBackend:
    """Embedded on-disk store: one SQLite file, key -> newline-joined ids."""

    def __init__(self, path, create=False):
        self.path = str(path)
        self._conn = sqlite3.connect(self.path)
        if create:
            self._conn.executescript(
                "DROP TABLE IF EXISTS kv; DROP TABLE IF EXISTS meta;"
                "CREATE TABLE kv (k TEXT PRIMARY KEY, ids TEXT);"
                "CREATE TABLE meta (k TEXT PRIMARY KEY, v TEXT);"
            )

    def put_many(self, items) -> None:
        self._conn.executemany("INSERT INTO kv (k, ids) VALUES (?, ?)",
                               ((k, "\n".join(ids)) for k, ids in items))
        self._conn.commit()

    def put_meta(self, key: str, value: str) -> None:
        self._conn.execute("INSERT OR REPLACE INTO meta (k, v) VALUES (?, ?)",
                           (key, value))
        self._conn.commit()

    def get_meta(self, key: str):
        row = self._conn.execute("SELECT v FROM meta WHERE k = ?", (key,)).fetchone()
        return row[0] if row else None

    def get(self, key: str):
        row = self._conn.execute("SELECT ids FROM kv WHERE k = ?", (key,)).fetchone()
        return row[0].split("\n") if row else None

    def key_sizes(self):
        for k, ids in self._conn.execute("SELECT k, ids FROM kv"):
            yield k, ids.count("\n") + 1

    def close(self):
        self._conn.close()


@dataclass
class BlockingIndex:
    backend: object
    stats: IndexStats
    hot_key_cap: int
    hot_keys: set

    def lookup(self, token: BlockingToken):
        """Id list for one token, or None; hot keys return None."""
        key = _store_key(token)
        if key in self.hot_keys:
            return None
        ids = self.backend.get(key)
        if ids is not None and self.hot_key_cap and len(ids) > self.hot_key_cap:
            return None
        return ids

    def close(self):
        self.backend.close()


def build_index(records, backend: str = "memory", path=None,
                hot_key_cap: int = 1000) -> BlockingIndex:
    """Index every (token, record_id) pair over normalized records.

    ``backend`` is "memory" or "sqlite" (sqlite persists to ``path``).
    Insertion is key-sorted, so permuting the input records yields an index
    with identical key -> id-set contents.
    """
    entries = {}
    seen = set()
    for r in records:
        if r.record_id in seen:
            raise DuplicateIdError(f"duplicate record_id {r.record_id!r} in reference")
        seen.add(r.record_id)
        for token in tokens_for(r):
            entries.setdefault(_store_key(token), set()).add(r.record_id)

    sorted_entries = [(k, sorted(entries[k])) for k in sorted(entries)]
    sizes = [len(ids) for _, ids in sorted_entries]
    hot = {k for k, ids in sorted_entries if hot_key_cap and len(ids) > hot_key_cap}
    stats = IndexStats(
        record_count=len(seen),
        key_count=len(sorted_entries),
        mean_ids_per_key=(sum(sizes) / len(sizes)) if sizes else 0.0,
        max_ids_per_key=max(sizes) if sizes else 0,
        hot_key_count=len(hot),
    )

    if backend == "memory":
        store = InMemoryBackend()
        for k, ids in sorted_entries:
            store.put(k, ids)
    elif backend == "sqlite":
        if path is None:
            raise DataError("sqlite backend requires a path")
        store = SqliteBackend(path, create=True)
        store.put_many(sorted_entries)
        store.put_meta("record_count", str(stats.record_count))
        store.put_meta("hot_key_cap", str(hot_key_cap))
    else:
        raise DataError(f"unknown index backend: {backend!r}")

    return BlockingIndex(backend=store, stats=stats, hot_key_cap=hot_key_cap,
                         hot_keys=hot)


def load_index(path) -> BlockingIndex:
    """Open a SQLite index file produced by build_index(backend="sqlite")."""
    store = SqliteBackend(path)
    cap = int(store.get_meta("hot_key_cap") or 0)
    record_count = int(store.get_meta("record_count") or 0)
    sizes = []
    hot = set()
    for k, size in store.key_sizes():
        sizes.append(size)
        if cap and size > cap:
            hot.add(k)
    stats = IndexStats(
        record_count=record_count,
        key_count=len(sizes),
        mean_ids_per_key=(sum(sizes) / len(sizes)) if sizes else 0.0,
        max_ids_per_key=max(sizes) if sizes else 0,
        hot_key_count=len(hot),
    )
    return BlockingIndex(backend=store, stats=stats, hot_key_cap=cap, hot_keys=hot)


def candidates(index: BlockingIndex, r: NormalizedRecord) -> set:
    """Union of id-sets over the record's tokens, hot keys excluded."""
    out = set()
    for token in tokens_for(r):
        ids = index.lookup(token)
        if ids:
            out.update(ids)
    return out
