"""Synthetic access-pattern generators and the HTRC trace format.

Generators are deterministic state machines: a spec plus a seed always yields
the same request stream. Random draws are integers only (numpy PCG64 plus an
integer-quantised CDF for Zipf), so streams match across platforms.

Trace file layout::

    b"HTRC" | version:u8 = 1 | record*
    record = delta_cycles:uleb128 | op:u8 (0 read, 1 write) | hPA:u64 le | size:u8

Traces carry no write data; write payloads are a pure function of
``(address, issue cycle, size)`` (:func:`synth_payload`), so a stream written
to a trace and read back is identical to the original.
"""

from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .errors import ConfigError, Exhausted, FormatError
from .memmodel import CACHELINE, LINES_PER_PAGE, PAGE_SIZE, HostAddr, MemRequest, Op

MAGIC = b"HTRC"
VERSION = 1
_CDF_SCALE = 1 << 53
_BATCH = 4096


class WorkloadKind(str, enum.Enum):
    UNIFORM = "uniform"
    ZIPF = "zipf"
    SCAN = "scan"
    HOTSPOT = "hotspot"
    TRACE = "trace"


@dataclass(frozen=True)
class WorkloadSpec:
    """What to generate.

    The working set is ``working_set_pages`` host pages picked (seeded) from
    ``[base_page, base_page + span_pages)``; with ``span_pages`` unset the
    span equals the working set. Request ``i`` issues at
    ``i * issue_gap_cycles``.
    """

    kind: WorkloadKind = WorkloadKind.UNIFORM
    working_set_pages: int = 1024
    ops: int | None = 100_000
    read_fraction: float = 1.0
    seed: int = 0
    s: float = 1.0
    hot_fraction: float = 0.1
    hot_prob: float = 0.9
    path: str | None = None
    base_page: int = 0
    span_pages: int | None = None
    issue_gap_cycles: int = 1
    size: int = CACHELINE

    def validate(self, path: str = "workload") -> None:
        if self.kind == WorkloadKind.TRACE:
            if not self.path:
                raise ConfigError(f"{path}.path", "trace workloads need a path")
            return
        if self.working_set_pages < 1:
            raise ConfigError(f"{path}.working_set_pages", "must be >= 1")
        span = self.span
        if span < self.working_set_pages:
            raise ConfigError(f"{path}.span_pages", "must be >= working_set_pages")
        if self.ops is None or self.ops < 0:
            raise ConfigError(f"{path}.ops", "synthetic workloads need ops >= 0")
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ConfigError(f"{path}.read_fraction", "must be within [0, 1]")
        if self.kind == WorkloadKind.ZIPF and not self.s > 0:
            raise ConfigError(f"{path}.s", "must be > 0")
        if self.kind == WorkloadKind.HOTSPOT:
            if not 0.0 < self.hot_fraction < 1.0:
                raise ConfigError(f"{path}.hot_fraction", "must be within (0, 1)")
            if not 0.0 <= self.hot_prob <= 1.0:
                raise ConfigError(f"{path}.hot_prob", "must be within [0, 1]")
        if not 1 <= self.size <= CACHELINE:
            raise ConfigError(f"{path}.size", f"must be within [1, {CACHELINE}]")
        if self.issue_gap_cycles < 0:
            raise ConfigError(f"{path}.issue_gap_cycles", "must be >= 0")

    @property
    def span(self) -> int:
        return self.working_set_pages if self.span_pages is None else self.span_pages

    @property
    def last_page(self) -> int:
        """One past the highest host page the workload can touch."""
        return self.base_page + self.span


def synth_payload(addr: int, issue_cycle: int, size: int) -> bytes:
    """Deterministic write data for a request."""
    return hashlib.blake2b(struct.pack("<QQ", addr, issue_cycle), digest_size=64).digest()[:size]


def harmonic(n: int, s: float = 1.0) -> float:
    """Generalised harmonic number ``sum_{k=1..n} k^-s``."""
    return math.fsum(k ** -s for k in range(1, n + 1))


def zipf_cdf(n: int, s: float) -> np.ndarray:
    """Integer CDF over ranks ``1..n`` scaled to ``2**53``; last entry equals the scale."""
    w = np.arange(1, n + 1, dtype=np.float64) ** -s
    c = np.cumsum(w)
    q = np.floor(c / c[-1] * _CDF_SCALE).astype(np.int64)
    q[-1] = _CDF_SCALE
    return q


class Generator:
    """Iterator of :class:`MemRequest`; :meth:`next` raises :class:`Exhausted` at the end."""

    def __init__(self, spec: WorkloadSpec):
        spec.validate()
        self.spec = spec
        self.emitted = 0
        if spec.kind == WorkloadKind.TRACE:
            self._trace = iter(trace_read(spec.path))
            return
        self._trace = None
        root = np.random.SeedSequence(spec.seed)
        layout_ss, draw_ss = root.spawn(2)
        layout = np.random.default_rng(layout_ss)
        self._rng = np.random.default_rng(draw_ss)
        n = spec.working_set_pages
        if spec.kind == WorkloadKind.SCAN:
            self.pages = np.arange(spec.base_page, spec.base_page + n, dtype=np.int64)
        else:
            self.pages = spec.base_page + layout.permutation(spec.span)[:n].astype(np.int64)
        if spec.kind == WorkloadKind.ZIPF:
            self._cdf = zipf_cdf(n, spec.s)
        self._n_hot = max(1, min(n - 1, math.ceil(spec.hot_fraction * n))) if n > 1 else 1
        self._buf: list[tuple[int, int, bool]] = []
        self._pos = 0

    def _page_ranks(self, k: int) -> np.ndarray:
        spec, rng, n = self.spec, self._rng, self.spec.working_set_pages
        if spec.kind == WorkloadKind.UNIFORM:
            return rng.integers(0, n, size=k)
        if spec.kind == WorkloadKind.ZIPF:
            u = rng.integers(0, _CDF_SCALE, size=k, dtype=np.int64)
            return np.searchsorted(self._cdf, u, side="right")
        if spec.kind == WorkloadKind.SCAN:
            return (self.emitted + np.arange(k)) % n
        # hotspot: first n_hot ranks are the hot set
        hot = rng.integers(0, 1 << 32, size=k) < int(round(spec.hot_prob * (1 << 32)))
        nh = self._n_hot
        out = np.where(hot, rng.integers(0, nh, size=k), nh + rng.integers(0, max(1, n - nh), size=k))
        return np.minimum(out, n - 1)

    def _refill(self) -> None:
        spec = self.spec
        k = _BATCH if spec.ops is None else min(_BATCH, spec.ops - self.emitted)
        self._buf, self._pos = [], 0
        ranks = self._page_ranks(k)
        lines = self._rng.integers(0, LINES_PER_PAGE, size=k)
        thr = int(round(spec.read_fraction * (1 << 32)))
        reads = self._rng.integers(0, 1 << 32, size=k) < thr
        pages = self.pages[ranks]
        self._buf = list(zip(pages.tolist(), lines.tolist(), reads.tolist()))

    def next(self) -> MemRequest:
        spec = self.spec
        if self._trace is not None:
            if spec.ops is not None and self.emitted >= spec.ops:
                raise Exhausted("trace workload reached its op limit")
            try:
                req = next(self._trace)
            except StopIteration:
                raise Exhausted("trace exhausted") from None
            self.emitted += 1
            return req
        if self.emitted >= spec.ops:
            raise Exhausted(f"workload produced all {spec.ops} requests")
        if self._pos >= len(self._buf):
            self._refill()
        page, line, is_read = self._buf[self._pos]
        self._pos += 1
        cycle = self.emitted * spec.issue_gap_cycles
        self.emitted += 1
        addr = page * PAGE_SIZE + line * CACHELINE
        if is_read:
            return MemRequest(Op.READ, HostAddr(addr), spec.size, None, cycle)
        return MemRequest(Op.WRITE, HostAddr(addr), spec.size, synth_payload(addr, cycle, spec.size), cycle)

    def __iter__(self) -> Iterator[MemRequest]:
        while True:
            try:
                yield self.next()
            except Exhausted:
                return


def gen_next(gen: Generator) -> MemRequest:
    return gen.next()


def _uleb128(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def trace_write(path: str | Path, requests: Iterable[MemRequest]) -> int:
    """Write ``requests`` (time ordered) to ``path``; returns the record count."""
    count = 0
    last = 0
    with open(path, "wb") as f:
        f.write(MAGIC + bytes([VERSION]))
        for req in requests:
            if req.issue_cycle < last:
                raise ValueError(f"record {count} goes back in time ({req.issue_cycle} < {last})")
            f.write(_uleb128(req.issue_cycle - last) + struct.pack("<BQB", int(req.op), req.addr, req.size))
            last = req.issue_cycle
            count += 1
    return count


def _read_records(f: BinaryIO) -> Iterator[MemRequest]:
    head = f.read(5)
    if len(head) < 4 or head[:4] != MAGIC:
        raise FormatError(0, "bad magic, expected b'HTRC'")
    if len(head) < 5:
        raise FormatError(4, "missing version byte")
    if head[4] != VERSION:
        raise FormatError(4, f"unsupported version {head[4]}")
    data = f.read()
    pos, n, cycle = 0, len(data), 0
    base = 5
    while pos < n:
        start = pos
        delta, shift = 0, 0
        while True:
            if pos >= n:
                raise FormatError(base + start, "truncated varint")
            b = data[pos]
            pos += 1
            delta |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                break
            if shift > 63:
                raise FormatError(base + start, "varint longer than 64 bits")
        if pos + 10 > n:
            raise FormatError(base + start, "truncated record")
        op, addr, size = struct.unpack_from("<BQB", data, pos)
        if op not in (0, 1):
            raise FormatError(base + pos, f"bad op byte {op}")
        if not 1 <= size <= CACHELINE or (addr % CACHELINE) + size > CACHELINE:
            raise FormatError(base + pos + 9, f"bad size {size} for address {addr:#x}")
        pos += 10
        cycle += delta
        if op == Op.READ:
            yield MemRequest(Op.READ, HostAddr(addr), size, None, cycle)
        else:
            yield MemRequest(Op.WRITE, HostAddr(addr), size, synth_payload(addr, cycle, size), cycle)


def trace_read(path: str | Path) -> Iterator[MemRequest]:
    """Yield the requests stored in a trace file, accumulating ``issue_cycle``."""
    with open(path, "rb") as f:
        yield from _read_records(f)


def make_generator(spec: WorkloadSpec) -> Generator:
    return Generator(spec)
