"""Region emulation: per-region latency tags and bandwidth-budget blocking.

Every read entering the emulator is tagged with ``submit_cycle +
latency_cycles`` of its region and pushed into that region's FIFO. Each
cycle, the head of every region FIFO is released if the tag has been reached
and the region's bandwidth counter for the current interval is below its
budget. At most one response leaves a region FIFO per cycle, and a blocked
head blocks everything behind it.

The engine is cycle-exact but event skipping: :meth:`EmuCore.tick` steps one
cycle, while :meth:`EmuCore.next_release_cycle` / :meth:`EmuCore.release_at`
jump straight to the next cycle where something can happen. Both produce the
same release schedule.
"""

from __future__ import annotations

import bisect
import enum
import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .errors import ConfigError, Unmapped
from .memmodel import PAGE_SIZE, DeviceAddr

NOMINAL_CLOCK_HZ = 200_000_000
FAST, SLOW = "fast", "slow"


@dataclass(frozen=True)
class RegionConfig:
    """A contiguous device range ``[start, end)`` with its emulated attributes.

    ``bw_budget`` is the number of responses the region may release per
    ``interval_cycles``; ``None`` means unconstrained (bounded only by the
    one-response-per-cycle FIFO pop rate).
    """

    region_id: int
    start: int
    end: int
    latency_cycles: int = 0
    bw_budget: int | None = None
    interval_cycles: int = 256
    tier: str = SLOW

    @property
    def pages(self) -> int:
        return (self.end - self.start) // PAGE_SIZE

    @property
    def first_page(self) -> int:
        return self.start // PAGE_SIZE

    @property
    def effective_budget(self) -> int:
        return self.interval_cycles if self.bw_budget is None else self.bw_budget


def validate_regions(regions: Sequence[RegionConfig], path: str = "regions") -> None:
    """Regions must be page aligned, non-empty, disjoint, and tile ``[0, end)``."""
    if not regions:
        raise ConfigError(path, "at least one region is required")
    seen_ids = set()
    for i, r in enumerate(regions):
        p = f"{path}[{i}]"
        if r.region_id in seen_ids:
            raise ConfigError(f"{p}.id", f"duplicate region id {r.region_id}")
        seen_ids.add(r.region_id)
        if r.start % PAGE_SIZE:
            raise ConfigError(f"{p}.start", "must be 4 KiB aligned")
        if r.end % PAGE_SIZE:
            raise ConfigError(f"{p}.end", "must be 4 KiB aligned")
        if r.start >= r.end:
            raise ConfigError(f"{p}.end", "must be greater than start")
        if r.latency_cycles < 0:
            raise ConfigError(f"{p}.latency_cycles", "must be >= 0")
        if r.bw_budget is not None and r.bw_budget < 1:
            raise ConfigError(f"{p}.bandwidth", "must be >= 1")
        if r.interval_cycles < 1:
            raise ConfigError(f"{p}.interval_cycles", "must be >= 1")
        if r.tier not in (FAST, SLOW):
            raise ConfigError(f"{p}.kind", f"must be '{FAST}' or '{SLOW}'")
    order = sorted(range(len(regions)), key=lambda i: regions[i].start)
    expected = 0
    for i in order:
        r = regions[i]
        if r.start < expected:
            raise ConfigError(f"{path}[{i}].start", f"overlaps the preceding region (starts at {r.start:#x})")
        if r.start > expected:
            raise ConfigError(f"{path}[{i}].start", f"gap in device space before {r.start:#x}")
        expected = r.end


def region_of(regions: Sequence[RegionConfig], addr: DeviceAddr) -> int:
    """Return the id of the region containing ``addr``."""
    for r in regions:
        if r.start <= addr < r.end:
            return r.region_id
    raise Unmapped(f"device address {addr:#x} is outside all regions")


class EventKind(enum.IntEnum):
    REQUEST_ARRIVAL = 0
    RESPONSE_READY = 1
    INTERVAL_RESET = 2
    PROFILER_TICK = 3
    MIGRATION_STEP = 4


@dataclass(order=True)
class SimEvent:
    at_cycle: int
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(default=None, compare=False)


class EventQueue:
    """Priority queue ordered by ``(at_cycle, insertion sequence)``."""

    def __init__(self):
        self._heap: list[SimEvent] = []
        self._seq = itertools.count()

    def push(self, at_cycle: int, kind: EventKind, payload: Any = None) -> SimEvent:
        ev = SimEvent(at_cycle, next(self._seq), kind, payload)
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> SimEvent:
        return heapq.heappop(self._heap)

    def peek_cycle(self) -> int | None:
        return self._heap[0].at_cycle if self._heap else None

    def __len__(self):
        return len(self._heap)

    def __bool__(self):
        return bool(self._heap)


class _RegionState:
    __slots__ = ("cfg", "latency", "budget", "interval", "fifo", "count", "window", "released")

    def __init__(self, cfg: RegionConfig):
        self.cfg = cfg
        self.latency = cfg.latency_cycles
        self.budget = cfg.effective_budget
        self.interval = cfg.interval_cycles
        self.fifo: deque[tuple[int, Any]] = deque()
        self.count = 0
        self.window = 0
        self.released = 0

    def next_cycle(self, timestamp: int) -> int:
        tag = self.fifo[0][0]
        c = tag if tag > timestamp else timestamp
        w = c // self.interval
        if w == self.window and self.count >= self.budget:
            c = (w + 1) * self.interval
        return c


class EmuCore:
    """Timestamp register plus per-region latency/bandwidth registers and FIFOs.

    ``timestamp`` is the next cycle to be processed. ``submit`` may be called
    for the current cycle before it is processed; the response becomes
    eligible at ``now + latency_cycles``.
    """

    def __init__(self, regions: Sequence[RegionConfig], base_latency_cycles: int = 0, record: bool = False):
        validate_regions(regions)
        self.regions = sorted(regions, key=lambda r: r.start)
        self.base_latency_cycles = base_latency_cycles
        self.timestamp = 0
        self._starts = [r.start for r in self.regions]
        self._end = self.regions[-1].end
        self._state = {r.region_id: _RegionState(r) for r in self.regions}
        self._by_index = [self._state[r.region_id] for r in self.regions]
        self._pending = 0
        self.release_log: list[tuple[int, int, Any]] | None = [] if record else None

    @property
    def total_pages(self) -> int:
        return self._end // PAGE_SIZE

    def region_of(self, addr: DeviceAddr) -> int:
        if not 0 <= addr < self._end:
            raise Unmapped(f"device address {addr:#x} is outside all regions")
        return self.regions[bisect.bisect_right(self._starts, addr) - 1].region_id

    def region(self, region_id: int) -> RegionConfig:
        return self._state[region_id].cfg

    def latency_of(self, region_id: int) -> int:
        return self._state[region_id].latency

    def read_latency(self, region_id: int) -> int:
        """Idle-path read latency of a region: device floor plus the latency register."""
        return self.base_latency_cycles + self._state[region_id].latency

    def submit(self, req_id: Any, addr: DeviceAddr, now: int) -> int:
        """Tag a read for the region of ``addr``; returns the release tag."""
        st = self._by_index[self._index_of(addr)]
        tag = now + st.latency
        st.fifo.append((tag, req_id))
        self._pending += 1
        return tag

    def submit_to_region(self, req_id: Any, region_id: int, now: int) -> int:
        st = self._state[region_id]
        tag = now + st.latency
        st.fifo.append((tag, req_id))
        self._pending += 1
        return tag

    def _index_of(self, addr: int) -> int:
        if not 0 <= addr < self._end:
            raise Unmapped(f"device address {addr:#x} is outside all regions")
        return bisect.bisect_right(self._starts, addr) - 1

    @property
    def pending(self) -> int:
        return self._pending

    def next_release_cycle(self) -> int | None:
        if not self._pending:
            return None
        ts = self.timestamp
        best = None
        for st in self._by_index:
            if st.fifo:
                c = st.next_cycle(ts)
                if best is None or c < best:
                    best = c
        return best

    def release_at(self, cycle: int) -> list[tuple[Any, int]]:
        """Process ``cycle`` (must be >= timestamp) and return ``(req_id, region_id)`` released."""
        if cycle < self.timestamp:
            raise ValueError(f"cycle {cycle} already processed (timestamp={self.timestamp})")
        out = []
        for st in self._by_index:
            if not st.fifo:
                continue
            w = cycle // st.interval
            if w != st.window:
                st.window = w
                st.count = 0
            tag, req_id = st.fifo[0]
            if tag <= cycle and st.count < st.budget:
                st.fifo.popleft()
                st.count += 1
                st.released += 1
                rid = st.cfg.region_id
                out.append((req_id, rid))
                if self.release_log is not None:
                    self.release_log.append((cycle, rid, req_id))
        self._pending -= len(out)
        self.timestamp = cycle + 1
        return out

    def tick(self) -> list[Any]:
        """Process the current cycle and advance the timestamp by one."""
        return [rid for rid, _ in self.release_at(self.timestamp)]

    def run_until_idle(self, limit: int | None = None) -> list[tuple[int, Any, int]]:
        """Release everything pending; returns ``(cycle, req_id, region_id)``."""
        out = []
        while self._pending:
            c = self.next_release_cycle()
            if limit is not None and c > limit:
                break
            out.extend((c, rid, reg) for rid, reg in self.release_at(c))
        return out


@dataclass(frozen=True)
class RegionMeasurement:
    region_id: int
    avg_latency_cycles: float
    throughput: float  # responses per cycle


def _dependent_chain(region: RegionConfig, n: int) -> list:
    from .memmodel import CACHELINE, MemRequest, Op

    lines = max(1, (region.end - region.start) // CACHELINE)
    return [MemRequest(Op.READ, region.start + CACHELINE * ((i * 7919) % lines), issue_cycle=0) for i in range(n)]


def measure_region(
    regions: Sequence[RegionConfig],
    region_id: int,
    *,
    base_latency_cycles: int = 0,
    chain_length: int = 256,
    burst_length: int | None = None,
) -> RegionMeasurement:
    """Probe one region the way a latency/bandwidth checker would.

    Latency comes from a dependent (pointer-chase style) chain of reads: each
    read issues when the previous one completes. Throughput comes from an
    independent burst of reads issued together, measured over the complete
    bandwidth intervals strictly inside the release span.
    """
    from .sim import run_requests

    region = next((r for r in regions if r.region_id == region_id), None)
    if region is None:
        raise ConfigError("region", f"no region with id {region_id}")
    chain = run_requests(regions, _dependent_chain(region, chain_length), base_latency_cycles=base_latency_cycles,
                         max_outstanding=1)
    latency = sum(chain.latencies) / len(chain.latencies)

    if burst_length is None:
        burst_length = max(8 * region.effective_budget, 2048)
    burst = run_requests(regions, _dependent_chain(region, burst_length), base_latency_cycles=base_latency_cycles)
    return RegionMeasurement(region_id, latency, steady_throughput(burst.release_cycles, region.interval_cycles))


def steady_throughput(release_cycles: Iterable[int], interval: int) -> float:
    """Responses per cycle over whole intervals strictly between the first and last release."""
    cycles = sorted(release_cycles)
    if not cycles:
        return 0.0
    first_w, last_w = cycles[0] // interval, cycles[-1] // interval
    if last_w - first_w >= 2:
        lo, hi = (first_w + 1) * interval, last_w * interval
        inside = bisect.bisect_left(cycles, hi) - bisect.bisect_left(cycles, lo)
        return inside / (hi - lo)
    return len(cycles) / (cycles[-1] - cycles[0] + 1)
