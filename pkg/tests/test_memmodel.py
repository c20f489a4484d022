import pytest
from hypothesis import given, settings, strategies as st

from tiersim.errors import OutOfRange
from tiersim.memmodel import PAGE_SIZE, BackingStore, MemRequest, Op, oracle_apply


def test_read_after_write():
    s = BackingStore(4)
    s.write(0, b"\xab")
    assert s.read(0, 1) == b"\xab"


def test_untouched_reads_zero():
    assert BackingStore(4).read(4096, 8) == bytes(8)


def test_write_at_capacity_out_of_range():
    s = BackingStore(4)
    with pytest.raises(OutOfRange):
        s.write(4 * PAGE_SIZE, b"\x00")
    with pytest.raises(OutOfRange):
        s.read(4 * PAGE_SIZE - 2, 4)


def test_overwrite_keeps_last_value():
    s = BackingStore(2)
    s.write(100, b"\x01\x02")
    s.write(100, b"\x03\x04")
    assert s.read(100, 2) == b"\x03\x04"


def test_write_across_page_boundary():
    s = BackingStore(2)
    s.write(PAGE_SIZE - 2, b"abcd")
    assert s.read(PAGE_SIZE - 2, 4) == b"abcd"
    assert s.read_page(1)[:2] == b"cd"


def test_swap_pages():
    s = BackingStore(3)
    s.write(0, b"x")
    s.swap_pages(0, 2)
    assert s.read(2 * PAGE_SIZE, 1) == b"x" and s.read(0, 1) == b"\x00"


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 64 * PAGE_SIZE - 1), st.binary(min_size=1, max_size=200)), max_size=40))
def test_store_matches_dense_array(writes):
    pages = 64
    s = BackingStore(pages)
    dense = bytearray(pages * PAGE_SIZE)
    for addr, data in writes:
        data = data[: pages * PAGE_SIZE - addr]
        s.write(addr, data)
        dense[addr:addr + len(data)] = data
    assert s.read(0, pages * PAGE_SIZE) == bytes(dense)


def test_oracle_apply_basic():
    o = BackingStore(4)
    assert oracle_apply(o, MemRequest(Op.WRITE, 8192, 2, b"\x01\x02")) is None
    assert oracle_apply(o, MemRequest(Op.READ, 8192, 2)) == b"\x01\x02"
    assert oracle_apply(o, MemRequest(Op.READ, 64, 8)) == bytes(8)


def test_oracle_script_matches_dense_array():
    import numpy as np

    rng = np.random.default_rng(5)
    pages = 16
    o = BackingStore(pages)
    dense = bytearray(pages * PAGE_SIZE)
    for _ in range(10_000):
        line = int(rng.integers(0, pages * PAGE_SIZE // 64))
        off = int(rng.integers(0, 64))
        size = int(rng.integers(1, 65 - off))
        addr = line * 64 + off
        if rng.random() < 0.5:
            data = rng.bytes(size)
            oracle_apply(o, MemRequest(Op.WRITE, addr, size, data))
            dense[addr:addr + size] = data
        else:
            assert oracle_apply(o, MemRequest(Op.READ, addr, size)) == bytes(dense[addr:addr + size])


@pytest.mark.parametrize("kw", [
    dict(op=Op.WRITE, addr=0, size=4, payload=b"abc"),
    dict(op=Op.READ, addr=0, size=4, payload=b"abcd"),
    dict(op=Op.READ, addr=60, size=8),
    dict(op=Op.READ, addr=0, size=0),
    dict(op=Op.READ, addr=0, size=65),
])
def test_request_validation(kw):
    with pytest.raises(ValueError):
        MemRequest(**kw)
