"""Host-managed baseline tiering policies.

These run above the emulated memory with no remapping layer. Page placement
is a host page -> device page table that the request router consults, and
every promotion is a CPU copy: the pages are read out through the host path
(consuming region bandwidth) and written back, after a fixed software cost.
A promotion exchanges the promoted slow page with a fast victim, so both
tiers keep their size.
"""

from __future__ import annotations

import enum
from array import array
from collections import deque
from dataclasses import dataclass

import numpy as np

from .emucore import EmuCore
from .memmodel import LINES_PER_PAGE, PAGE_SIZE, CACHELINE


class PolicyKind(str, enum.Enum):
    NONE = "none"
    PTE_SCAN = "pte_scan"
    PEBS = "pebs"
    HETEROMEM = "heteromem"


@dataclass(frozen=True)
class PteScanParams:
    scan_interval_cycles: int = 1_000_000
    scan_cycles_per_page: int = 8


@dataclass(frozen=True)
class PebsParams:
    sample_every_n: int = 64
    bit_clear_interval_cycles: int = 1_000_000


@dataclass(frozen=True)
class CpuCopyParams:
    software_overhead_cycles: int = 2000


class Placement:
    """Host page -> device page map for baselines; starts as identity."""

    def __init__(self, total_pages: int, fast_pages: int, first_host_page: int = 0):
        self.total_pages = total_pages
        self.fast_pages = fast_pages
        self.first_host_page = first_host_page
        self.device_of = array("I", range(total_pages))
        self.host_of = array("I", range(total_pages))

    def is_fast_host(self, h: int) -> bool:
        return self.device_of[h] < self.fast_pages

    def swap(self, h1: int, h2: int) -> None:
        d1, d2 = self.device_of[h1], self.device_of[h2]
        self.device_of[h1], self.device_of[h2] = d2, d1
        self.host_of[d1], self.host_of[d2] = h2, h1

    def fast_mask(self) -> np.ndarray:
        """Boolean mask over host pages currently backed by fast memory."""
        dev = np.frombuffer(self.device_of, dtype=np.uint32)
        mask = dev < self.fast_pages
        mask[: self.first_host_page] = False
        return mask

    def slow_mask(self) -> np.ndarray:
        dev = np.frombuffer(self.device_of, dtype=np.uint32)
        mask = dev >= self.fast_pages
        mask[: self.first_host_page] = False
        return mask


class AccessBitTable:
    """One accessed bit per host page; set by any access, cleared by scans."""

    def __init__(self, total_pages: int):
        self.bits = bytearray(total_pages)

    def set(self, h: int) -> None:
        self.bits[h] = 1

    def clear_all(self) -> None:
        self.bits[:] = bytes(len(self.bits))

    def view(self) -> np.ndarray:
        return np.frombuffer(self.bits, dtype=np.uint8)


def choose_victim(placement: Placement, bits: AccessBitTable, exclude=()) -> int | None:
    """Coldest fast host page: clear access bit first, then lowest page index."""
    fast = placement.fast_mask()
    for h in exclude:
        fast[h] = False
    acc = bits.view().astype(bool)
    cand = np.flatnonzero(fast & ~acc)
    if cand.size == 0:
        cand = np.flatnonzero(fast)
    return int(cand[0]) if cand.size else None


class BaselinePolicy:
    """Shared machinery: access bits, a bounded promotion queue, victim choice."""

    kind = PolicyKind.NONE

    def __init__(self, placement: Placement, queue_capacity: int = 1024):
        self.placement = placement
        self.bits = AccessBitTable(placement.total_pages)
        self.queue: deque[int] = deque()
        self._queued: set[int] = set()
        self.queue_capacity = queue_capacity
        self.cpu_cycles = 0
        self.stats = dict(candidates=0, queue_overflow=0)

    def enqueue(self, h: int) -> None:
        if h in self._queued:
            return
        if len(self.queue) >= self.queue_capacity:
            self.stats["queue_overflow"] += 1
            return
        self.queue.append(h)
        self._queued.add(h)
        self.stats["candidates"] += 1

    def next_promotion(self, in_flight=()) -> int | None:
        """Pop the next queued page that is still in slow memory."""
        while self.queue:
            h = self.queue.popleft()
            self._queued.discard(h)
            if not self.placement.is_fast_host(h) and h not in in_flight:
                return h
        return None

    def victim_for(self, promoted: int, in_flight=()) -> int | None:
        return choose_victim(self.placement, self.bits, exclude=(promoted, *in_flight))

    def on_promoted(self, h: int) -> None:
        # a migrated page keeps its young state
        self.bits.set(h)

    def on_access(self, h: int, is_fast: bool, is_read: bool, now: int) -> None:
        self.bits.bits[h] = 1

    def tick_interval(self) -> int | None:
        """Cycles between periodic ``tick`` calls, or None."""
        return None

    def tick(self, now: int) -> None:
        pass


class NoMigrationPolicy(BaselinePolicy):
    kind = PolicyKind.NONE

    def on_access(self, h, is_fast, is_read, now):
        pass


class PteScanPolicy(BaselinePolicy):
    """Periodically walk slow pages; promote every page whose accessed bit is set."""

    kind = PolicyKind.PTE_SCAN

    def __init__(self, placement: Placement, params: PteScanParams = PteScanParams(), **kw):
        super().__init__(placement, **kw)
        self.params = params
        self.scans = 0

    def tick_interval(self):
        return self.params.scan_interval_cycles

    def tick(self, now: int) -> list[int]:
        return ptescan_tick(self, now)


def ptescan_tick(state: PteScanPolicy, now: int) -> list[int]:
    """One scan: queue slow pages with the accessed bit set (lowest index first), clear all bits."""
    p = state.placement
    slow = p.slow_mask()
    acc = state.bits.view().astype(bool)
    hot = np.flatnonzero(slow & acc).tolist()
    walked = int(p.total_pages - p.first_host_page)
    state.cpu_cycles += walked * state.params.scan_cycles_per_page
    # a fresh scan supersedes candidates left over from the previous one
    state.queue.clear()
    state._queued.clear()
    for h in hot:
        state.enqueue(h)
    state.bits.clear_all()
    state.scans += 1
    return hot


class PebsPolicy(BaselinePolicy):
    """Promote the page of every Nth slow-memory read."""

    kind = PolicyKind.PEBS

    def __init__(self, placement: Placement, params: PebsParams = PebsParams(), **kw):
        super().__init__(placement, **kw)
        self.params = params
        self.counter = 0
        self.samples = 0

    def on_access(self, h, is_fast, is_read, now):
        self.bits.bits[h] = 1
        if is_read and not is_fast:
            pebs_tick(self, h)

    def tick_interval(self):
        return self.params.bit_clear_interval_cycles

    def tick(self, now):
        self.bits.clear_all()


def pebs_tick(state: PebsPolicy, h: int) -> int | None:
    """Count one slow read; on counter overflow record ``h`` for promotion."""
    state.counter += 1
    if state.counter >= state.params.sample_every_n:
        state.counter = 0
        state.samples += 1
        state.enqueue(h)
        return h
    return None


def make_policy(kind: PolicyKind, placement: Placement, pte_scan: PteScanParams = PteScanParams(),
                pebs: PebsParams = PebsParams()) -> BaselinePolicy:
    if kind == PolicyKind.PTE_SCAN:
        return PteScanPolicy(placement, pte_scan)
    if kind == PolicyKind.PEBS:
        return PebsPolicy(placement, pebs)
    if kind == PolicyKind.NONE:
        return NoMigrationPolicy(placement)
    raise ValueError(f"{kind} is not a host-side baseline")


def cpu_copy_migration(emu: EmuCore, pages: tuple[int, ...], now: int = 0,
                       software_overhead_cycles: int = 2000) -> int:
    """Cycle cost of a CPU copy of ``pages`` (device pages) on an otherwise idle emulator.

    Each page costs one kernel-path overhead, then its 64 lines are read
    through the host path (region latency and bandwidth counters apply) and
    written back, writes being acknowledged at base latency.
    """
    t = now + software_overhead_cycles * len(pages)
    ids = set()
    for k, page in enumerate(pages):
        for line in range(LINES_PER_PAGE):
            ids.add(("copy", k, line))
            emu.submit(("copy", k, line), page * PAGE_SIZE + line * CACHELINE, t)
    last = t
    for cycle, rid, _ in emu.run_until_idle():
        if rid in ids:
            last = cycle
    return last + 2 * emu.base_latency_cycles - now
