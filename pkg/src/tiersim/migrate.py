"""Swap-based page migration inside the device.

A job reads both pages cacheline by cacheline without waiting for earlier
responses, and starts writing each line to its destination as soon as its
read returns. Migration traffic never passes the host-path bandwidth
counters of the emulator, but it does see the regions' read latency.

Budget accounting charges one page (4 KiB) per completed swap: the promoted
page. Under that accounting the default pair limit of 32 pairs per 100,000
cycles at 200 MHz moves 250 MiB/s and fits the default 256 MiB/s cap.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .emucore import NOMINAL_CLOCK_HZ, EmuCore
from .errors import AlignmentError, SameRegionError
from .memmodel import LINES_PER_PAGE, PAGE_SIZE, BackingStore

MIGRATION_BYTES = PAGE_SIZE


class Phase(enum.Enum):
    READING_BOTH = "reading"
    WRITING_BOTH = "writing"
    DONE = "done"


@dataclass
class MigrationJob:
    """Swap of a fast-memory page with a slow-memory page (device byte addresses)."""

    dpa_fast: int
    dpa_slow: int
    start_cycle: int = 0
    end_cycle: int | None = None
    phase: Phase = Phase.READING_BOTH
    staged: tuple[bytes, bytes] | None = None


class MigrationBudget:
    """Byte cap per aligned accounting window, derived from a bytes-per-second limit.

    ``bytes_per_second=None`` removes the cap.
    """

    def __init__(self, bytes_per_second: int | None = 256 << 20, window_cycles: int = 100_000,
                 clock_hz: int = NOMINAL_CLOCK_HZ):
        self.bytes_per_second = bytes_per_second
        self.window_cycles = window_cycles
        self.clock_hz = clock_hz
        self.cap_bytes = None if bytes_per_second is None else bytes_per_second * window_cycles // clock_hz
        self.window = 0
        self.consumed = 0
        self.per_window: dict[int, int] = {}

    def _roll(self, now: int) -> None:
        w = now // self.window_cycles
        if w != self.window:
            self.window = w
            self.consumed = 0

    def can_consume(self, now: int, nbytes: int = MIGRATION_BYTES) -> bool:
        self._roll(now)
        return self.cap_bytes is None or self.consumed + nbytes <= self.cap_bytes

    def consume(self, now: int, nbytes: int = MIGRATION_BYTES) -> None:
        self._roll(now)
        self.consumed += nbytes
        self.per_window[self.window] = self.consumed

    def next_window_start(self, now: int) -> int:
        return (now // self.window_cycles + 1) * self.window_cycles


def swap_schedule(start: int, fast_latency: int, slow_latency: int, write_latency: int,
                  lines: int = LINES_PER_PAGE) -> int:
    """Completion cycle of an overlapped swap.

    Each page is read as a stream of ``lines`` cacheline reads issued one per
    cycle; a line's write to the other page issues when its read returns
    (one write issue per cycle per stream) and completes ``write_latency``
    later.
    """
    end = start
    for lat in (fast_latency, slow_latency):
        write_issue = -1
        for i in range(lines):
            ret = start + i + lat
            write_issue = ret if ret > write_issue else write_issue + 1
        end = max(end, write_issue + write_latency)
    return end


def _check_job(job: MigrationJob, emu: EmuCore) -> tuple[int, int]:
    if job.dpa_fast % PAGE_SIZE or job.dpa_slow % PAGE_SIZE:
        raise AlignmentError(f"migration addresses {job.dpa_fast:#x}, {job.dpa_slow:#x} are not page aligned")
    rf, rs = emu.region_of(job.dpa_fast), emu.region_of(job.dpa_slow)
    if rf == rs:
        raise SameRegionError(f"both pages are in region {rf}")
    return rf, rs


def migration_execute(job: MigrationJob, store: BackingStore, emu: EmuCore) -> int:
    """Swap the two pages in ``store``; return the completion cycle."""
    rf, rs = _check_job(job, emu)
    pf, ps = job.dpa_fast // PAGE_SIZE, job.dpa_slow // PAGE_SIZE
    job.staged = (store.read_page(pf), store.read_page(ps))
    job.phase = Phase.WRITING_BOTH
    store.swap_pages(pf, ps)
    job.end_cycle = swap_schedule(job.start_cycle, emu.read_latency(rf), emu.read_latency(rs),
                                  emu.base_latency_cycles)
    job.phase = Phase.DONE
    job.staged = None
    return job.end_cycle


def migration_throughput_probe(n_jobs: int, emu: EmuCore, dpa_fast: int, dpa_slow: int,
                               budget: MigrationBudget | None = None) -> float:
    """Run ``n_jobs`` back-to-back swaps and report promoted pages per second.

    When the budget ever stalls a job, elapsed time is counted to the end of
    the last accounting window used, so a budget-bound run reports the
    capped steady-state rate rather than crediting a partly used window.
    """
    store = BackingStore(emu.total_pages)
    now = 0
    stalled = False
    for _ in range(n_jobs):
        if budget is not None:
            while not budget.can_consume(now):
                now = budget.next_window_start(now)
                stalled = True
            budget.consume(now)
        now = migration_execute(MigrationJob(dpa_fast, dpa_slow, start_cycle=now), store, emu)
    elapsed = now
    if stalled:
        elapsed = max(now, budget.next_window_start(now - 1))
    clock = budget.clock_hz if budget is not None else NOMINAL_CLOCK_HZ
    return n_jobs * clock / elapsed
