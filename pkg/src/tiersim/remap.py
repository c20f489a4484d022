"""Host-page to device-page translation and the migration transaction.

Memory layout: device pages ``[0, metadata_pages)`` at the bottom of fast
memory hold the remapping and reverse tables (4-byte entries each) and are
reserved from the host. All other host pages start identity mapped. The
remapping cache sits on the request path; a miss costs one metadata read at
fast-region latency.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass

from .errors import Busy, ConfigError, OutOfRange, SameRegionError
from .memmodel import PAGE_SIZE

ENTRY_BYTES = 4


def metadata_pages_for(total_pages: int, entry_bytes: int = ENTRY_BYTES) -> int:
    """Pages needed to hold both the remapping and the reverse table."""
    return math.ceil(2 * entry_bytes * total_pages / PAGE_SIZE)


class RemapTables:
    """Remapping table (host page -> device page) and its inverse."""

    def __init__(self, total_pages: int, metadata_pages: int):
        self.total_pages = total_pages
        self.metadata_pages = metadata_pages
        self.remap = array("I", range(total_pages))
        self.reverse = array("I", range(total_pages))

    def lookup(self, h: int) -> int:
        if not self.metadata_pages <= h < self.total_pages:
            raise OutOfRange(f"host page {h} outside host-visible pages [{self.metadata_pages}, {self.total_pages})")
        return self.remap[h]

    def is_consistent(self) -> bool:
        """True when ``remap`` is a permutation fixing metadata pages and ``reverse`` is its inverse."""
        rm, rv = self.remap, self.reverse
        if any(rm[i] != i for i in range(self.metadata_pages)):
            return False
        if sorted(rm) != list(range(self.total_pages)):
            return False
        return all(rv[rm[h]] == h for h in range(self.total_pages))


def remap_init(total_pages: int, metadata_pages: int, fast_pages: int) -> RemapTables:
    if metadata_pages >= fast_pages:
        raise ConfigError("regions", f"metadata needs {metadata_pages} pages but fast memory has only {fast_pages}")
    if total_pages > (1 << 32):
        raise ConfigError("regions", "4-byte page indexes cover at most 2^32 pages")
    return RemapTables(total_pages, metadata_pages)


class RemapCache:
    """Set-associative LRU cache of remapping-table entries, indexed by host page."""

    def __init__(self, capacity_bytes: int = 2 << 20, ways: int = 16, entry_bytes: int = 8):
        entries = capacity_bytes // entry_bytes
        if ways < 1 or entries < ways:
            raise ConfigError("remap_cache", f"capacity {capacity_bytes} B cannot hold one {ways}-way set")
        self.ways = ways
        self.num_sets = entries // ways
        self.capacity_entries = self.num_sets * ways
        # dict insertion order doubles as recency order: first key is the LRU way
        self._sets: list[dict[int, int]] = [{} for _ in range(self.num_sets)]
        self.hits = 0
        self.misses = 0

    def get(self, h: int) -> int | None:
        s = self._sets[h % self.num_sets]
        d = s.pop(h, None)
        if d is None:
            self.misses += 1
            return None
        s[h] = d
        self.hits += 1
        return d

    def peek(self, h: int) -> int | None:
        return self._sets[h % self.num_sets].get(h)

    def install(self, h: int, d: int) -> None:
        s = self._sets[h % self.num_sets]
        if h in s:
            del s[h]
        elif len(s) >= self.ways:
            del s[next(iter(s))]
        s[h] = d

    def update_if_present(self, h: int, d: int) -> None:
        s = self._sets[h % self.num_sets]
        if h in s:
            s[h] = d

    def items(self):
        for s in self._sets:
            yield from s.items()

    def __len__(self):
        return sum(len(s) for s in self._sets)

    @property
    def hit_rate(self) -> float:
        n = self.hits + self.misses
        return self.hits / n if n else 0.0


@dataclass(frozen=True)
class MigrationRequest:
    """A hot slow-memory device page and a cold fast-memory device page to swap."""

    hot_dpa: int
    cold_dpa: int


@dataclass
class TransactionHandle:
    request: MigrationRequest
    h_hot: int
    h_cold: int
    begin_cycle: int
    metadata_ready_cycle: int


def translate(cache: RemapCache, tables: RemapTables, h: int, miss_penalty: int = 0) -> tuple[int, bool, int]:
    """Return ``(device page, hit, extra cycles)``; a miss installs the entry."""
    d = cache.get(h)
    if d is not None:
        return d, True, 0
    d = tables.lookup(h)
    cache.install(h, d)
    return d, False, miss_penalty


class RemapUnit:
    """Tables, cache and transaction state of the remapping unit.

    ``fast_pages`` is the size of the fast-memory prefix of device space; the
    metadata lives at its bottom.
    """

    def __init__(self, total_pages: int, fast_pages: int, *, cache: RemapCache | None = None,
                 miss_penalty: int = 0):
        self.metadata_pages = metadata_pages_for(total_pages)
        self.fast_pages = fast_pages
        self.tables = remap_init(total_pages, self.metadata_pages, fast_pages)
        self.cache = cache if cache is not None else RemapCache()
        self.miss_penalty = miss_penalty
        self.in_flight: TransactionHandle | None = None
        self.metadata_reads = 0
        self.commits = 0

    @property
    def total_pages(self) -> int:
        return self.tables.total_pages

    @property
    def blocked(self) -> bool:
        return self.in_flight is not None

    def translate(self, h: int) -> tuple[int, bool, int]:
        d, hit, extra = translate(self.cache, self.tables, h, self.miss_penalty)
        if not hit:
            self.metadata_reads += 1
        return d, hit, extra

    def translate_direct(self, h: int) -> int:
        return self.tables.lookup(h)

    def check_pair(self, mreq: MigrationRequest) -> None:
        if mreq.hot_dpa == mreq.cold_dpa:
            raise SameRegionError("hot and cold page are identical")
        if not self.fast_pages <= mreq.hot_dpa < self.total_pages:
            raise SameRegionError(f"hot page {mreq.hot_dpa} is not in slow memory")
        if not self.metadata_pages <= mreq.cold_dpa < self.fast_pages:
            raise SameRegionError(f"cold page {mreq.cold_dpa} is not in host-visible fast memory")

    def migrate_begin(self, mreq: MigrationRequest, now: int = 0) -> TransactionHandle:
        """Block the host path and fetch the reverse entries of both pages."""
        if self.in_flight is not None:
            raise Busy("a migration transaction is already in flight")
        self.check_pair(mreq)
        rv = self.tables.reverse
        self.metadata_reads += 2
        handle = TransactionHandle(mreq, rv[mreq.hot_dpa], rv[mreq.cold_dpa], now, now + self.miss_penalty)
        self.in_flight = handle
        return handle

    def migrate_commit(self, handle: TransactionHandle) -> None:
        """Point each host page at the other's device page, then unblock."""
        if handle is not self.in_flight:
            raise ValueError("handle does not belong to the in-flight transaction")
        t = self.tables
        hot, cold = handle.request.hot_dpa, handle.request.cold_dpa
        t.remap[handle.h_hot] = cold
        t.remap[handle.h_cold] = hot
        t.reverse[cold] = handle.h_hot
        t.reverse[hot] = handle.h_cold
        self.cache.update_if_present(handle.h_hot, cold)
        self.cache.update_if_present(handle.h_cold, hot)
        self.in_flight = None
        self.commits += 1
