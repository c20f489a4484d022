"""Event-driven simulation of one host driving the emulated tiered device.

Per cycle, work happens in a fixed order: scheduled events first (in
insertion order), then new host arrivals, then the emulator's releases for
that cycle. Reads travel

    arrival -> translation (remapping cache, or the baseline placement map)
            -> dispatch to the emulator -> release -> response at +base

and writes are acknowledged ``base_latency_cycles`` after dispatch. Data
effects happen at translation time, so the backing store always sees
requests in arrival order. The host is open loop (requests issue at their
``issue_cycle``) unless ``max_outstanding`` bounds requests in flight; a
freed slot is reused the cycle after the response arrives.

With the tiering device, profiler pairs queue for the migration unit, one
transaction at a time, gated by the migration byte budget. A transaction
blocks translation from begin to commit; blocked requests are replayed at
commit in arrival order. Baseline policies instead move pages by CPU copy:
a software delay, then 64 line reads per page through the host path, then
write-back, with the placement map switched at completion.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .config import SimConfig, to_dict
from .device import HeteroMemDevice
from .emucore import FAST, EmuCore, RegionConfig
from .memmodel import CACHELINE, LINES_PER_PAGE, PAGE_SHIFT, PAGE_SIZE, BackingStore, MemRequest, Op
from .metrics import SimMetrics, latency_summary, ratio_series
from .migrate import MigrationBudget, swap_schedule
from .policies import Placement, PolicyKind, make_policy
from .profiler import Profiler, hash_seeds
from .remap import MigrationRequest, RemapCache
from .workloads import make_generator

# event kinds
_DISPATCH, _COMPLETE, _MIG_START, _MIG_COMMIT, _COPY_ISSUE, _COPY_DONE, _TICK = range(7)


@dataclass
class RunResult:
    metrics: SimMetrics
    latencies: list[int] = field(default_factory=list)
    release_cycles: list[int] = field(default_factory=list)


class Simulator:
    """One simulation run. ``record`` keeps per-request logs for oracle checks."""

    def __init__(self, cfg: SimConfig, requests: Iterable[MemRequest] | None = None, *,
                 record: bool = False, track_data: bool = True, reserve_metadata: bool = True):
        self.cfg = cfg
        self.record = record or cfg.report.record_logs
        self.base = cfg.base_latency_cycles
        self.emu = EmuCore(cfg.regions, cfg.base_latency_cycles, record=self.record)
        self.total_pages = self.emu.total_pages
        self.fast_pages = sum(r.pages for r in cfg.regions if r.tier == FAST)
        self.heteromem = cfg.policy == PolicyKind.HETEROMEM
        self.max_outstanding = cfg.max_outstanding
        self._source: Iterator[MemRequest] = iter(requests) if requests is not None else iter(make_generator(cfg.workload))

        meta_region = self.emu.region_of(0)
        self.miss_penalty = self.emu.read_latency(meta_region)
        self.budget = MigrationBudget(cfg.migration.bytes_per_second, cfg.migration.window_cycles, cfg.clock_hz)
        self.migration_enabled = cfg.migration.enabled
        self.device = self.profiler = self.placement = self.policy = None
        if self.heteromem:
            rc = cfg.remap_cache
            cache = RemapCache(rc.capacity_bytes, rc.ways, rc.entry_bytes)
            self.device = HeteroMemDevice(self.total_pages, self.fast_pages, cache=cache,
                                          miss_penalty=self.miss_penalty, track_data=track_data)
            self.store = self.device.store
            self.miss_depth = rc.miss_fifo_depth
            if cfg.profiler_enabled:
                seeds = hash_seeds(np.random.default_rng([cfg.seed, 0x5EED]), cfg.profiler.depth)
                self.profiler = Profiler(cfg.profiler, self.fast_pages, self.device.metadata_pages, seeds,
                                         record=self.record)
        else:
            first = cfg.metadata_pages if reserve_metadata else 0
            self.placement = Placement(self.total_pages, self.fast_pages, first)
            self.policy = make_policy(cfg.policy, self.placement, cfg.pte_scan, cfg.pebs)
            self.store = BackingStore(self.total_pages) if track_data else None

        self._heap: list = []
        self._seq = itertools.count()
        self._live = 0
        self.now = 0
        self._rid = itertools.count()
        self._inflight: dict[int, int] = {}
        self._outstanding = 0
        self._source_done = False
        # translation state
        self._blocked: deque = deque()
        self._missq: deque[int] = deque()
        self._fill_ready: dict[int, int] = {}
        # migration state
        self._pending_pairs: deque[MigrationRequest] = deque()
        self._busy: set[int] = set()
        self._mig_active = False
        self._draining = False
        self._retry_scheduled = False
        self._copy_left = 0
        self._copy_ids = itertools.count(1)

        self.m = SimMetrics(sampling_interval_cycles=cfg.report.sampling_interval_cycles)
        self._interval = cfg.report.sampling_interval_cycles
        self._acc: list[int] = []
        self._slow: list[int] = []
        self._migs: list[int] = []
        self._reads = Counter()
        self._writes = Counter()
        self._hist: Counter = Counter()
        self._pairs_per_window: Counter = Counter()
        self.latencies: list[int] = []
        self.release_cycles: list[int] = []
        self.fast_read_log: list[tuple[int, int]] = []
        self.read_results: list[tuple[int, bytes]] = []
        self.capture_reads = False

    # ------------------------------------------------------------------ scheduling
    def _push(self, cycle: int, kind: int, payload=None, live: bool = True) -> None:
        heapq.heappush(self._heap, (cycle, next(self._seq), kind, payload, live))
        if live:
            self._live += 1

    def _next_arrival(self) -> MemRequest | None:
        try:
            return next(self._source)
        except StopIteration:
            return None

    @property
    def _host_idle(self) -> bool:
        return self._source_done and self._outstanding == 0

    # ------------------------------------------------------------------ main loop
    def run(self) -> SimMetrics:
        heap, emu = self._heap, self.emu
        inf = math.inf
        nxt = self._next_arrival()
        self._source_done = nxt is None
        if self.policy is not None and self.policy.tick_interval():
            self._push(self.policy.tick_interval(), _TICK, live=False)
        last = 0
        while True:
            if nxt is None and not emu.pending and self._live == 0:
                break
            c_ev = heap[0][0] if heap else inf
            if nxt is not None and (self.max_outstanding is None or self._outstanding < self.max_outstanding):
                c_arr = nxt.issue_cycle if nxt.issue_cycle > self.now else self.now
            else:
                c_arr = inf
            c_emu = emu.next_release_cycle()
            if c_emu is None:
                c_emu = inf
            c = min(c_ev, c_arr, c_emu)
            self.now = c
            if c_ev == c:
                cycle, _, kind, payload, live = heapq.heappop(heap)
                if live:
                    self._live -= 1
                self._handle(kind, payload, cycle)
                if kind != _TICK:
                    last = cycle
                continue
            if c_arr == c:
                self._arrive(nxt, c)
                last = c
                nxt = self._next_arrival()
                if nxt is None:
                    self._source_done = True
                continue
            for rid, region in emu.release_at(c):
                self._release(rid, region, c)
            last = c
        return self._finish(last)

    def _handle(self, kind: int, payload, now: int) -> None:
        if kind == _DISPATCH:
            self._dispatch(*payload, now)
        elif kind == _COMPLETE:
            self._outstanding -= 1
        elif kind == _MIG_START:
            self._retry_scheduled = False
            if self.heteromem:
                self._try_start_migration(now)
            else:
                self._try_start_copy(now)
        elif kind == _MIG_COMMIT:
            self._commit(payload, now)
        elif kind == _COPY_ISSUE:
            self._copy_issue(payload, now)
        elif kind == _COPY_DONE:
            self._copy_done(payload, now)
        elif kind == _TICK:
            if not self._host_idle:
                self.policy.tick(now)
                self._try_start_copy(now)
                self._push(now + self.policy.tick_interval(), _TICK, live=False)

    # ------------------------------------------------------------------ request path
    def _arrive(self, req: MemRequest, now: int) -> None:
        rid = next(self._rid)
        self._outstanding += 1
        self.m.total_requests += 1
        if self.heteromem:
            if self.device.in_transaction:
                self._blocked.append((rid, req, now))
                return
            self._translate(rid, req, now, now)
        else:
            self._translate_baseline(rid, req, now)

    def _translate(self, rid: int, req: MemRequest, arrival: int, now: int) -> None:
        acc = self.device.access(req)
        if self.capture_reads and acc.data is not None:
            self.read_results.append((rid, acc.data))
        h = req.addr >> PAGE_SHIFT
        ready = now
        if not acc.hit:
            q = self._missq
            while q and q[0] <= now:
                q.popleft()
            start = q.popleft() if len(q) >= self.miss_depth else now
            ready = start + acc.extra_cycles
            q.append(ready)
            self._fill_ready[h] = ready
        else:
            fill = self._fill_ready.get(h)
            if fill is not None and fill > now:
                ready = fill
        dpa = (acc.device_page << PAGE_SHIFT) | (req.addr & (PAGE_SIZE - 1))
        if ready == now:
            self._dispatch(rid, req.op, dpa, arrival, now)
        else:
            self._push(ready, _DISPATCH, (rid, req.op, dpa, arrival))

    def _translate_baseline(self, rid: int, req: MemRequest, now: int) -> None:
        h = req.addr >> PAGE_SHIFT
        d = self.placement.device_of[h]
        dpa = (d << PAGE_SHIFT) | (req.addr & (PAGE_SIZE - 1))
        if self.store is not None:
            if req.op == Op.WRITE:
                self.store.write(dpa, req.payload)
            else:
                data = self.store.read(dpa, req.size)
                if self.capture_reads:
                    self.read_results.append((rid, data))
        self.policy.on_access(h, d < self.fast_pages, req.op == Op.READ, now)
        self._dispatch(rid, req.op, dpa, now, now)
        if self.policy.queue:
            self._try_start_copy(now)

    def _count(self, series: list, now: int, n: int = 1) -> None:
        b = now // self._interval
        while len(series) <= b:
            series.append(0)
        series[b] += n

    def _dispatch(self, rid: int, op: int, dpa: int, arrival: int, now: int) -> None:
        d = dpa >> PAGE_SHIFT
        is_fast = d < self.fast_pages
        self._count(self._acc, now)
        if not is_fast:
            self._count(self._slow, now)
            self.m.slow_accesses += 1
        else:
            self.m.fast_accesses += 1
        region = self.emu.region_of(dpa)
        if op == Op.READ:
            self._reads[region] += 1
            if self.profiler is not None:
                if self.record and is_fast:
                    self.fast_read_log.append((now, d))
                pair = self.profiler.on_read(d, is_fast, now)
                if pair is not None:
                    self._enqueue_pair(pair, now)
            self.emu.submit(rid, dpa, now)
            self._inflight[rid] = arrival
        else:
            self._writes[region] += 1
            self._complete_at(now + self.base)

    def _complete_at(self, cycle: int) -> None:
        if self.max_outstanding is None:
            self._outstanding -= 1
        else:
            # the host spends one cycle on a response before issuing the request that depends on it
            self._push(cycle + 1, _COMPLETE)

    def _release(self, rid: int, region: int, now: int) -> None:
        if rid < 0:
            self._copy_left -= 1
            if self._copy_left == 0:
                self._push(now + 2 * self.base, _COPY_DONE, self._copy_job)
            return
        done = now + self.base
        lat = done - self._inflight.pop(rid)
        self._hist[lat] += 1
        if self.record:
            self.latencies.append(lat)
            self.release_cycles.append(now)
        self._complete_at(done)

    # ------------------------------------------------------------------ tiering device
    def _enqueue_pair(self, pair: MigrationRequest, now: int) -> None:
        self.m.pairs_emitted += 1
        self._pairs_per_window[now // self.cfg.profiler.pair_window_cycles] += 1
        if not self.migration_enabled or pair.hot_dpa in self._busy or pair.cold_dpa in self._busy:
            self.m.pairs_discarded += 1
            return
        self._pending_pairs.append(pair)
        self._busy.update((pair.hot_dpa, pair.cold_dpa))
        self.profiler.busy_pages.add(pair.cold_dpa)
        self._try_start_migration(now)

    def _release_pair(self, pair: MigrationRequest) -> None:
        self._busy.discard(pair.hot_dpa)
        self._busy.discard(pair.cold_dpa)
        self.profiler.busy_pages.discard(pair.cold_dpa)

    def _try_start_migration(self, now: int) -> None:
        if self._mig_active or self._draining or not self._pending_pairs:
            return
        if self._host_idle:
            while self._pending_pairs:
                self._release_pair(self._pending_pairs.popleft())
                self.m.pairs_discarded += 1
            return
        if not self.budget.can_consume(now):
            if not self._retry_scheduled:
                self._retry_scheduled = True
                self._push(self.budget.next_window_start(now), _MIG_START)
            return
        pair = self._pending_pairs.popleft()
        self.budget.consume(now)
        handle = self.device.begin(pair, now)
        self._mig_active = True
        emu = self.emu
        fast_lat = emu.read_latency(emu.region_of(pair.cold_dpa << PAGE_SHIFT))
        slow_lat = emu.read_latency(emu.region_of(pair.hot_dpa << PAGE_SHIFT))
        end = swap_schedule(now, fast_lat, slow_lat, self.base)
        commit = max(end, handle.metadata_ready_cycle)
        self.m.migration_log.append([now, commit, pair.hot_dpa, pair.cold_dpa])
        self._push(commit, _MIG_COMMIT, handle)

    def _commit(self, handle, now: int) -> None:
        self.device.commit(handle)
        self._mig_active = False
        self.m.migrations_device += 1
        self._count(self._migs, now)
        self._release_pair(handle.request)
        # pairs detected during the replay wait until every blocked request is through
        self._draining = True
        while self._blocked:
            rid, req, arrival = self._blocked.popleft()
            self._translate(rid, req, arrival, now)
        self._draining = False
        self._try_start_migration(now)

    # ------------------------------------------------------------------ baselines (CPU copy)
    def _try_start_copy(self, now: int) -> None:
        if self._mig_active or not self.migration_enabled or self._host_idle or not self.policy.queue:
            return
        if not self.budget.can_consume(now):
            if not self._retry_scheduled:
                self._retry_scheduled = True
                self._push(self.budget.next_window_start(now), _MIG_START)
            return
        h = self.policy.next_promotion()
        if h is None:
            return
        victim = self.policy.victim_for(h)
        if victim is None:
            return
        self.budget.consume(now)
        self._mig_active = True
        p = self.placement
        job = (h, victim, p.device_of[h], p.device_of[victim], now)
        self._push(now + 2 * self.cfg.cpu_copy.software_overhead_cycles, _COPY_ISSUE, job)

    def _copy_issue(self, job, now: int) -> None:
        self._copy_job = job
        self._copy_left = 2 * LINES_PER_PAGE
        for d in (job[2], job[3]):
            for line in range(LINES_PER_PAGE):
                self.emu.submit(-next(self._copy_ids), (d << PAGE_SHIFT) + line * CACHELINE, now)
        # keeps the loop alive until the copy reads drain
        self._live += 1

    def _copy_done(self, job, now: int) -> None:
        self._live -= 1
        h, victim, dh, dv, start = job
        self.placement.swap(h, victim)
        if self.store is not None:
            self.store.swap_pages(dh, dv)
        self.policy.on_promoted(h)
        self._mig_active = False
        self.m.migrations_policy += 1
        self.m.migration_log.append([start, now, dh, dv])
        self._count(self._migs, now)
        self._try_start_copy(now)

    # ------------------------------------------------------------------ results
    def _finish(self, last: int) -> SimMetrics:
        m = self.m
        m.total_cycles = last + 1 if m.total_requests else 0
        n = math.ceil(m.total_cycles / self._interval)
        for s in (self._acc, self._slow, self._migs):
            s.extend([0] * (n - len(s)))
        m.accesses_series, m.slow_accesses_series, m.migrations_series = self._acc, self._slow, self._migs
        m.slow_ratio_series = ratio_series(self._acc, self._slow)
        m.reads_by_region = {str(r.region_id): self._reads[r.region_id] for r in self.cfg.regions}
        m.writes_by_region = {str(r.region_id): self._writes[r.region_id] for r in self.cfg.regions}
        m.read_latency_histogram = {str(k): self._hist[k] for k in sorted(self._hist)}
        for k, v in latency_summary(self._hist).items():
            setattr(m, k, v)
        m.max_pairs_per_window = max(self._pairs_per_window.values(), default=0)
        m.max_migration_bytes_per_window = max(self.budget.per_window.values(), default=0)
        m.migration_byte_cap_per_window = self.budget.cap_bytes
        if self.device is not None:
            cache = self.device.remap.cache
            m.remap_cache_hits, m.remap_cache_misses = cache.hits, cache.misses
            m.remap_cache_hit_rate = cache.hit_rate
            m.metadata_reads = self.device.remap.metadata_reads
        if self.profiler is not None:
            m.profiler = dict(self.profiler.stats)
            m.dropped_hot = self.profiler.stats["dropped_hot"]
        if self.policy is not None:
            migrating_starts = Counter(start // self.budget.window_cycles for start, *_ in m.migration_log)
            m.max_pairs_per_window = max(migrating_starts.values(), default=0)
            m.policy_cpu_cycles = self.policy.cpu_cycles
        return m


def run_sim(cfg: SimConfig, **kw) -> SimMetrics:
    """Run ``cfg`` to completion and return its metrics."""
    return Simulator(cfg, **kw).run()


def run_and_report(cfg: SimConfig, json_path=None, csv_path=None) -> SimMetrics:
    from .metrics import emit_report

    metrics = run_sim(cfg)
    emit_report(metrics, json_path or cfg.report.json, csv_path or cfg.report.csv, to_dict(cfg))
    return metrics


def run_requests(regions: Sequence[RegionConfig], requests: Iterable[MemRequest], *,
                 base_latency_cycles: int = 0, max_outstanding: int | None = None) -> RunResult:
    """Drive raw requests straight onto the emulated regions (identity placement, no tiering)."""
    cfg = SimConfig(regions=tuple(regions), base_latency_cycles=base_latency_cycles,
                    max_outstanding=max_outstanding, policy=PolicyKind.NONE)
    sim = Simulator(cfg, requests, record=True, track_data=False, reserve_metadata=False)
    metrics = sim.run()
    return RunResult(metrics, sim.latencies, sim.release_cycles)
