"""Addresses, requests and the sparse backing store.

Host physical addresses (``HostAddr``) and device physical addresses
(``DeviceAddr``) are both plain integers at runtime; they are kept apart by
the type checker only. The one sanctioned host->device conversion lives in
:mod:`tiersim.remap`. :func:`oracle_apply` is the deliberate exception: it
treats a host address as a flat device address to build the reference
memory that the fuzz tests compare against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NewType

from .errors import OutOfRange

PAGE_SHIFT = 12
PAGE_SIZE = 1 << PAGE_SHIFT
CACHELINE = 64
LINES_PER_PAGE = PAGE_SIZE // CACHELINE
MAX_PAGE_INDEX = (1 << 32) - 1

HostAddr = NewType("HostAddr", int)
DeviceAddr = NewType("DeviceAddr", int)


def page_of(addr: int) -> int:
    return addr >> PAGE_SHIFT


def offset_of(addr: int) -> int:
    return addr & (PAGE_SIZE - 1)


class Op(enum.IntEnum):
    READ = 0
    WRITE = 1


@dataclass(slots=True)
class MemRequest:
    """One host access of at most one cacheline."""

    op: Op
    addr: HostAddr
    size: int = CACHELINE
    payload: bytes | None = None
    issue_cycle: int = 0

    def __post_init__(self):
        if not 1 <= self.size <= CACHELINE:
            raise ValueError(f"size must be in [1, {CACHELINE}], got {self.size}")
        if self.addr < 0 or self.issue_cycle < 0:
            raise ValueError("address and issue cycle must be non-negative")
        if (self.addr % CACHELINE) + self.size > CACHELINE:
            raise ValueError(f"request at {self.addr:#x} size {self.size} crosses a cacheline")
        if self.op == Op.WRITE:
            if self.payload is None or len(self.payload) != self.size:
                raise ValueError("write payload must be exactly `size` bytes")
        elif self.payload is not None:
            raise ValueError("reads carry no payload")

    @property
    def is_read(self) -> bool:
        return self.op == Op.READ


class BackingStore:
    """Sparse byte-addressable memory; untouched bytes read as zero."""

    def __init__(self, capacity_pages: int):
        if capacity_pages <= 0:
            raise ValueError("capacity_pages must be positive")
        self.capacity_pages = capacity_pages
        self.capacity_bytes = capacity_pages * PAGE_SIZE
        self._pages: dict[int, bytearray] = {}

    def _check(self, addr: int, size: int) -> None:
        if addr < 0 or size < 0 or addr + size > self.capacity_bytes or (size == 0 and addr > self.capacity_bytes):
            raise OutOfRange(f"[{addr:#x}, {addr + size:#x}) outside store of {self.capacity_bytes:#x} bytes")

    def read(self, addr: DeviceAddr, size: int) -> bytes:
        self._check(addr, size)
        page, off = addr >> PAGE_SHIFT, addr & (PAGE_SIZE - 1)
        if off + size <= PAGE_SIZE:
            buf = self._pages.get(page)
            return bytes(size) if buf is None else bytes(buf[off:off + size])
        out = bytearray()
        while size:
            n = min(size, PAGE_SIZE - off)
            buf = self._pages.get(page)
            out += bytes(n) if buf is None else buf[off:off + n]
            size -= n
            page += 1
            off = 0
        return bytes(out)

    def write(self, addr: DeviceAddr, data: bytes) -> None:
        size = len(data)
        self._check(addr, size)
        page, off = addr >> PAGE_SHIFT, addr & (PAGE_SIZE - 1)
        if off + size <= PAGE_SIZE:
            buf = self._pages.get(page)
            if buf is None:
                buf = self._pages[page] = bytearray(PAGE_SIZE)
            buf[off:off + size] = data
            return
        pos = 0
        while pos < size:
            n = min(size - pos, PAGE_SIZE - off)
            buf = self._pages.get(page)
            if buf is None:
                buf = self._pages[page] = bytearray(PAGE_SIZE)
            buf[off:off + n] = data[pos:pos + n]
            pos += n
            page += 1
            off = 0

    def read_page(self, page: int) -> bytes:
        self._check(page * PAGE_SIZE, PAGE_SIZE)
        buf = self._pages.get(page)
        return bytes(PAGE_SIZE) if buf is None else bytes(buf)

    def swap_pages(self, a: int, b: int) -> None:
        """Exchange the full contents of two pages."""
        self._check(a * PAGE_SIZE, PAGE_SIZE)
        self._check(b * PAGE_SIZE, PAGE_SIZE)
        pa, pb = self._pages.pop(a, None), self._pages.pop(b, None)
        if pa is not None:
            self._pages[b] = pa
        if pb is not None:
            self._pages[a] = pb

    def touched_pages(self) -> list[int]:
        return sorted(self._pages)


def oracle_apply(oracle: BackingStore, req: MemRequest) -> bytes | None:
    """Apply ``req`` to a flat memory where the host address is used untranslated."""
    if req.op == Op.WRITE:
        oracle.write(DeviceAddr(req.addr), req.payload)
        return None
    return oracle.read(DeviceAddr(req.addr), req.size)
