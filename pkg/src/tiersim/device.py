"""Functional model of the tiering device: translation, data, and migration transactions.

This is the untimed half of the device. :class:`HeteroMemDevice` translates
host requests through the remapping unit, applies them to the device backing
store, and runs migration transactions. While a transaction is open every
host request is queued; the queue is replayed in arrival order at commit.
The timed simulator drives the same object, so the data path checked by the
integrity fuzz is the one used in experiments.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .memmodel import PAGE_SHIFT, PAGE_SIZE, BackingStore, DeviceAddr, MemRequest, Op
from .remap import MigrationRequest, RemapCache, RemapUnit, TransactionHandle


@dataclass(slots=True)
class Access:
    """Outcome of one translated host request."""

    device_page: int
    hit: bool
    extra_cycles: int
    data: bytes | None


class HeteroMemDevice:
    def __init__(self, total_pages: int, fast_pages: int, *, cache: RemapCache | None = None,
                 miss_penalty: int = 0, track_data: bool = True):
        self.remap = RemapUnit(total_pages, fast_pages, cache=cache, miss_penalty=miss_penalty)
        self.store = BackingStore(total_pages) if track_data else None
        self.blocked: deque[MemRequest] = deque()
        self.swaps = 0

    @property
    def metadata_pages(self) -> int:
        return self.remap.metadata_pages

    @property
    def fast_pages(self) -> int:
        return self.remap.fast_pages

    @property
    def in_transaction(self) -> bool:
        return self.remap.blocked

    def access(self, req: MemRequest) -> Access:
        """Translate and apply ``req`` now; the host path must not be blocked."""
        d, hit, extra = self.remap.translate(req.addr >> PAGE_SHIFT)
        data = None
        if self.store is not None:
            dpa = DeviceAddr((d << PAGE_SHIFT) | (req.addr & (PAGE_SIZE - 1)))
            if req.op == Op.WRITE:
                self.store.write(dpa, req.payload)
            else:
                data = self.store.read(dpa, req.size)
        return Access(d, hit, extra, data)

    def submit(self, req: MemRequest) -> Access | None:
        """Apply ``req``, or queue it and return None while a transaction is open."""
        if self.remap.blocked:
            self.blocked.append(req)
            return None
        return self.access(req)

    def begin(self, mreq: MigrationRequest, now: int = 0) -> TransactionHandle:
        """Open a transaction and swap the two device pages' contents."""
        handle = self.remap.migrate_begin(mreq, now)
        if self.store is not None:
            self.store.swap_pages(mreq.hot_dpa, mreq.cold_dpa)
        self.swaps += 1
        return handle

    def commit(self, handle: TransactionHandle) -> list[tuple[MemRequest, Access]]:
        """Publish the new mapping, unblock, and replay queued requests in order."""
        self.remap.migrate_commit(handle)
        replayed = []
        while self.blocked and not self.remap.blocked:
            req = self.blocked.popleft()
            replayed.append((req, self.access(req)))
        return replayed

    def migrate(self, mreq: MigrationRequest, now: int = 0) -> list[tuple[MemRequest, Access]]:
        return self.commit(self.begin(mreq, now))

    def read_host(self, addr: int, size: int) -> bytes:
        """Read through the current mapping without touching the cache (for checks)."""
        d = self.remap.translate_direct(addr >> PAGE_SHIFT)
        return self.store.read(DeviceAddr((d << PAGE_SHIFT) | (addr & (PAGE_SIZE - 1))), size)
