"""Hot/cold page detection on the translated read stream.

Slow-memory reads feed a count-min sketch with saturating counters and
per-counter hot bits; fast-memory reads feed a ping-pong bitmap whose
completed half is scanned incrementally for pages that were not read during
the previous period. Detected hot pages are paired with buffered cold pages
and emitted under a per-window pair limit.

Time is advanced lazily: every call that carries a cycle first catches up
the scan cursor, the bitmap period switches and the sketch resets that
happened since the previous call, exactly as if the unit had been stepped
every cycle.
"""

from __future__ import annotations

from array import array
from collections import deque
from dataclasses import dataclass

import numpy as np

from .remap import MigrationRequest

MASK64 = (1 << 64) - 1
_TYPECODE = {8: "B", 16: "H", 32: "I"}


@dataclass(frozen=True)
class ProfilerParams:
    depth: int = 4
    width: int = 4096
    counter_bits: int = 8
    hot_threshold: int = 8
    reset_period_cycles: int = 1_000_000
    cold_period_cycles: int = 500_000
    scan_pages_per_cycle: int = 4
    cold_buffer_capacity: int = 1024
    pair_window_cycles: int = 100_000
    max_pairs_per_window: int = 32
    hot_queue_capacity: int = 256


def hash_seeds(rng: np.random.Generator, depth: int) -> list[int]:
    """``depth`` odd 64-bit multipliers for multiply-shift hashing."""
    return [int(x) | 1 for x in rng.integers(0, 1 << 64, size=depth, dtype=np.uint64)]


class CountMinSketch:
    """D lanes of W saturating counters, each with a hot bit.

    Lane ``i`` maps page ``p`` to ``((seed_i * p) mod 2^64) >> (64 - log2 W)``.
    """

    def __init__(self, depth: int = 4, width: int = 4096, counter_bits: int = 8,
                 hot_threshold: int = 8, seeds: list[int] | None = None):
        if width < 2 or width & (width - 1):
            raise ValueError("width must be a power of two")
        if counter_bits not in _TYPECODE:
            raise ValueError(f"counter_bits must be one of {sorted(_TYPECODE)}")
        if seeds is None:
            seeds = hash_seeds(np.random.default_rng(0), depth)
        if len(seeds) != depth or any(s % 2 == 0 for s in seeds):
            raise ValueError("need `depth` odd seeds")
        self.depth = depth
        self.width = width
        self.counter_max = (1 << counter_bits) - 1
        self.hot_threshold = hot_threshold
        self.seeds = [s & MASK64 for s in seeds]
        self._shift = 64 - (width.bit_length() - 1)
        self._typecode = _TYPECODE[counter_bits]
        self.counters = [array(self._typecode, bytes(width * array(self._typecode).itemsize)) for _ in range(depth)]
        self.hot_bits = [bytearray(width) for _ in range(depth)]
        self.observed = 0

    def slots(self, page: int) -> list[int]:
        sh = self._shift
        return [((a * page) & MASK64) >> sh for a in self.seeds]

    def slots_many(self, pages: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`slots`; returns a ``(depth, len(pages))`` index array."""
        p = np.asarray(pages, dtype=np.uint64)
        sh = np.uint64(self._shift)
        with np.errstate(over="ignore"):
            return np.stack([(np.uint64(a) * p) >> sh for a in self.seeds]).astype(np.int64)

    def observe(self, page: int) -> bool:
        """Count one access; True iff the page crosses the threshold and is not already reported."""
        self.observed += 1
        sh, cmax = self._shift, self.counter_max
        est = cmax
        all_hot = True
        idx = []
        for a, lane, hot in zip(self.seeds, self.counters, self.hot_bits):
            j = ((a * page) & MASK64) >> sh
            v = lane[j]
            if v < cmax:
                v += 1
                lane[j] = v
            if v < est:
                est = v
            if not hot[j]:
                all_hot = False
            idx.append(j)
        if est >= self.hot_threshold and not all_hot:
            for hot, j in zip(self.hot_bits, idx):
                hot[j] = 1
            return True
        return False

    def update_many(self, pages) -> None:
        """Count a batch of accesses (no hot-bit logic); equals repeated saturating increments."""
        idx = self.slots_many(pages)
        self.observed += idx.shape[1]
        for i, lane in enumerate(self.counters):
            counts = np.frombuffer(lane, dtype=np.dtype(self._typecode)).astype(np.int64)
            np.add.at(counts, idx[i], 1)
            np.minimum(counts, self.counter_max, out=counts)
            self.counters[i] = array(self._typecode, counts.astype(np.dtype(self._typecode)).tobytes())

    def estimate(self, page: int) -> int:
        sh = self._shift
        return min(lane[((a * page) & MASK64) >> sh] for a, lane in zip(self.seeds, self.counters))

    def estimate_many(self, pages) -> np.ndarray:
        idx = self.slots_many(pages)
        lanes = [np.frombuffer(lane, dtype=np.dtype(self._typecode)) for lane in self.counters]
        return np.min(np.stack([lanes[i][idx[i]] for i in range(self.depth)]), axis=0).astype(np.int64)

    def reset(self) -> None:
        for lane in self.counters:
            lane[:] = array(self._typecode, bytes(len(lane) * lane.itemsize))
        for hot in self.hot_bits:
            hot[:] = bytes(len(hot))
        self.observed = 0


class PingPongBitmap:
    """Two per-page bit arrays over fast memory; one records, the other is scanned.

    Pages below ``first_page`` (remapping metadata) are recorded but never
    reported cold. ``period`` counts completed switches; the inactive array
    describes period ``period - 1``. Both arrays start clear, so the scan
    during period 0 classifies every page as cold for the (empty) period -1.
    """

    def __init__(self, num_pages: int, period_cycles: int, first_page: int = 0):
        self.num_pages = num_pages
        self.period_cycles = period_cycles
        self.first_page = first_page
        self.arrays = [bytearray(num_pages), bytearray(num_pages)]
        self.active = 0
        self.period = 0
        self.cursor = first_page

    @property
    def recording(self) -> bytearray:
        return self.arrays[self.active]

    @property
    def completed(self) -> bytearray:
        return self.arrays[self.active ^ 1]

    def observe(self, page: int) -> None:
        self.arrays[self.active][page] = 1

    def switch(self) -> None:
        """Start a new period: the array that just recorded becomes the scanned one."""
        self.active ^= 1
        rec = self.arrays[self.active]
        rec[:] = bytes(self.num_pages)
        self.period += 1
        self.cursor = self.first_page

    def scan_step(self, budget_pages: int, skip=None) -> list[int]:
        """Advance the scan cursor by up to ``budget_pages``; return pages with unset bits."""
        if budget_pages <= 0 or self.cursor >= self.num_pages:
            return []
        lo = self.cursor
        hi = min(self.num_pages, lo + budget_pages)
        self.cursor = hi
        view = np.frombuffer(self.completed, dtype=np.uint8, count=hi - lo, offset=lo)
        cold = (np.flatnonzero(view == 0) + lo).tolist()
        if skip:
            cold = [p for p in cold if p not in skip]
        return cold

    @property
    def scan_done(self) -> bool:
        return self.cursor >= self.num_pages


class ColdPageBuffer:
    """Bounded FIFO of unique cold fast-memory pages, tagged with their classification period.

    Pushing a page that is already buffered refreshes its period tag in place.
    """

    def __init__(self, capacity: int = 1024):
        self.capacity = capacity
        self._fifo: deque[int] = deque()
        self._period: dict[int, int] = {}

    def push(self, page: int, period: int) -> bool:
        if page in self._period:
            self._period[page] = period
            return True
        if len(self._fifo) >= self.capacity:
            return False
        self._fifo.append(page)
        self._period[page] = period
        return True

    def pop(self) -> tuple[int, int] | None:
        if not self._fifo:
            return None
        page = self._fifo.popleft()
        return page, self._period.pop(page)

    def __contains__(self, page: int) -> bool:
        return page in self._period

    def __len__(self):
        return len(self._fifo)

    @property
    def full(self) -> bool:
        return len(self._fifo) >= self.capacity


class PairRateLimiter:
    """At most ``max_pairs`` emissions per aligned window of ``window_cycles``."""

    def __init__(self, window_cycles: int = 100_000, max_pairs: int = 32):
        self.window_cycles = window_cycles
        self.max_pairs = max_pairs
        self.window = 0
        self.pairs_emitted_this_window = 0

    def permits(self, now: int) -> bool:
        w = now // self.window_cycles
        if w != self.window:
            self.window = w
            self.pairs_emitted_this_window = 0
        return self.pairs_emitted_this_window < self.max_pairs

    def record(self, now: int) -> None:
        self.permits(now)
        self.pairs_emitted_this_window += 1


class Profiler:
    """Hot/cold profiling of device read traffic for a two-tier layout.

    Fast memory is device pages ``[0, fast_pages)``; the first
    ``reserved_pages`` of it hold metadata. ``busy_pages`` (optional, owned
    by the caller) lists pages already committed to a pending migration;
    the scan never re-buffers them.
    """

    def __init__(self, params: ProfilerParams, fast_pages: int, reserved_pages: int = 0,
                 seeds: list[int] | None = None, record: bool = False):
        self.params = params
        self.fast_pages = fast_pages
        self.sketch = CountMinSketch(params.depth, params.width, params.counter_bits, params.hot_threshold, seeds)
        self.bitmap = PingPongBitmap(fast_pages, params.cold_period_cycles, reserved_pages)
        self.cold = ColdPageBuffer(params.cold_buffer_capacity)
        self.limiter = PairRateLimiter(params.pair_window_cycles, params.max_pairs_per_window)
        self.hot_queue: deque[int] = deque()
        self._hot_members: set[int] = set()
        self.busy_pages: set[int] = set()
        self._clock = 0
        self._reset_epoch = 0
        self.stats = dict(hot_detected=0, dropped_hot=0, deferred_hot=0, hot_queue_overflow=0,
                          cold_found=0, cold_stale=0, pairs=0, reads_fast=0, reads_slow=0)
        self.record = record
        # (cycle, page, classification period); only filled when record=True
        self.cold_log: list[tuple[int, int, int]] = []
        self.emitted_cold_log: list[tuple[int, int, int]] = []
        self.pair_log: list[tuple[int, int, int]] = []

    def catch_up(self, now: int) -> None:
        """Apply every scan step, period switch and sketch reset in ``[clock, now)``."""
        if now <= self._clock:
            return
        p = self.params
        bm = self.bitmap
        t = self._clock
        while t < now:
            next_switch = (bm.period + 1) * bm.period_cycles
            seg_end = min(now, next_switch)
            if not bm.scan_done and not self.cold.full:
                self._scan((seg_end - t) * p.scan_pages_per_cycle)
            t = seg_end
            if t == next_switch:
                bm.switch()
        epoch = now // p.reset_period_cycles
        if epoch != self._reset_epoch:
            self._reset_epoch = epoch
            self.sketch.reset()
        self._clock = now

    def _scan(self, budget: int) -> None:
        bm = self.bitmap
        classified = bm.period - 1
        for page in bm.scan_step(budget, self.busy_pages):
            fresh = page not in self.cold
            if not self.cold.push(page, classified):
                # buffer full: leave the cursor on this page for a later step
                bm.cursor = page
                break
            if not fresh:
                continue
            self.stats["cold_found"] += 1
            if self.record:
                self.cold_log.append((self._clock, page, classified))

    def _pop_cold(self) -> tuple[int, int] | None:
        bm = self.bitmap
        while True:
            item = self.cold.pop()
            if item is None:
                return None
            page, classified = item
            # read since classification, or too old for the bitmaps to vouch for it
            if (bm.recording[page] or classified < bm.period - 2
                    or (classified < bm.period - 1 and bm.completed[page])):
                self.stats["cold_stale"] += 1
                continue
            return item

    def on_read(self, dpa: int, is_fast: bool, now: int) -> MigrationRequest | None:
        self.catch_up(now)
        if is_fast:
            self.stats["reads_fast"] += 1
            self.bitmap.observe(dpa)
        else:
            self.stats["reads_slow"] += 1
            if self.sketch.observe(dpa):
                self.stats["hot_detected"] += 1
                if dpa not in self._hot_members:
                    if len(self.hot_queue) >= self.params.hot_queue_capacity:
                        self.stats["hot_queue_overflow"] += 1
                    else:
                        if self.hot_queue or not self.limiter.permits(now):
                            self.stats["deferred_hot"] += 1
                        self.hot_queue.append(dpa)
                        self._hot_members.add(dpa)
        return self._emit(now)

    def _emit(self, now: int) -> MigrationRequest | None:
        if not self.hot_queue:
            return None
        if not self.limiter.permits(now):
            return None
        hot = self.hot_queue.popleft()
        self._hot_members.discard(hot)
        item = self._pop_cold()
        if item is None:
            self.stats["dropped_hot"] += 1
            return None
        cold, classified = item
        self.limiter.record(now)
        self.stats["pairs"] += 1
        if self.record:
            self.pair_log.append((now, hot, cold))
            self.emitted_cold_log.append((now, cold, classified))
        return MigrationRequest(hot, cold)
