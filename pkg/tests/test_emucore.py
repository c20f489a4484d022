import pytest
from hypothesis import given, settings, strategies as st

from tiersim.emucore import EmuCore, EventKind, EventQueue, RegionConfig, measure_region, region_of, validate_regions
from tiersim.errors import ConfigError, Unmapped

GIB = 1 << 30
MIB = 1 << 20


def two_regions(lat1=0, bw1=None, interval=256):
    return [RegionConfig(0, 0, 4 * GIB, 0, None, interval, "fast"), RegionConfig(1, 4 * GIB, 8 * GIB, lat1, bw1, interval)]


def test_region_of_boundaries():
    regs = two_regions()
    assert region_of(regs, 4 * GIB) == 1
    assert region_of(regs, 0) == 0
    with pytest.raises(Unmapped):
        region_of(regs, 8 * GIB)
    emu = EmuCore(regs)
    assert emu.region_of(4 * GIB - 1) == 0 and emu.region_of(4 * GIB) == 1
    with pytest.raises(Unmapped):
        emu.submit("x", 8 * GIB, 0)


def test_submit_tag_is_now_plus_latency():
    emu = EmuCore(two_regions(lat1=128))
    assert emu.submit("a", 4 * GIB, 1000) == 1128
    emu0 = EmuCore(two_regions(lat1=0))
    assert emu0.submit("a", 4 * GIB, 1000) == 1000


def test_two_submits_keep_order_in_every_interleaving():
    # a at cycle 10 and b at cycle 11, with ticks interleaved at every possible point
    for lat in (0, 1, 5):
        for extra_ticks in range(0, 4):
            emu = EmuCore(two_regions(lat1=lat))
            emu.release_at(0)
            order = []
            for c in range(1, 40):
                if c == 10:
                    emu.submit("a", 4 * GIB, 10)
                if c == 11 + extra_ticks:
                    emu.submit("b", 4 * GIB, c)
                order += emu.tick()
            assert order == ["a", "b"]


def test_budget_two_of_five_per_interval():
    regs = [RegionConfig(0, 0, MIB, 0, 2, 100, "fast")]
    emu = EmuCore(regs)
    for i in range(5):
        emu.submit(i, 0, 0)
    per_interval = [0, 0, 0, 0]
    for _ in range(400):
        c = emu.timestamp
        per_interval[c // 100] += len(emu.tick())
    assert per_interval == [2, 2, 1, 0]


def test_tick_empty_and_future_tag():
    emu = EmuCore(two_regions(lat1=50))
    assert emu.tick() == []
    emu.submit("a", 4 * GIB, emu.timestamp)
    assert emu.tick() == []
    assert emu.timestamp == 2


def test_blocked_head_blocks_ready_followers():
    # budget 1 per 10 cycles: the second ready response waits for the next interval
    emu = EmuCore([RegionConfig(0, 0, MIB, 0, 1, 10, "fast")])
    emu.submit("a", 0, 0)
    emu.submit("b", 0, 0)
    out = emu.run_until_idle()
    assert [(c, r) for c, r, _ in out] == [(0, "a"), (10, "b")]


def test_one_release_per_region_per_cycle():
    emu = EmuCore([RegionConfig(0, 0, MIB, 0, None, 10, "fast")])
    for i in range(5):
        emu.submit(i, 0, 0)
    assert [c for c, _, _ in emu.run_until_idle()] == [0, 1, 2, 3, 4]


reqs = st.lists(st.tuples(st.integers(0, 300), st.integers(0, 3)), min_size=1, max_size=60)


def _four():
    return [RegionConfig(0, 0, MIB, 3, 2, 16, "fast"), RegionConfig(1, MIB, 2 * MIB, 40, None, 32),
            RegionConfig(2, 2 * MIB, 3 * MIB, 7, 5, 8), RegionConfig(3, 3 * MIB, 4 * MIB, 0, 1, 3)]


def _schedule(regs, submissions, stepwise):
    emu = EmuCore(regs, record=True)
    subs = sorted(enumerate(submissions), key=lambda x: x[1][0])
    if stepwise:
        i = 0
        while i < len(subs) or emu.pending:
            while i < len(subs) and subs[i][1][0] == emu.timestamp:
                rid, (t, r) = subs[i]
                emu.submit(rid, r * MIB, t)
                i += 1
            emu.tick()
    else:
        for rid, (t, r) in subs:
            while emu.pending and emu.next_release_cycle() < t:
                emu.release_at(emu.next_release_cycle())
            emu.submit(rid, r * MIB, t)
        emu.run_until_idle()
    return emu.release_log


@settings(max_examples=80, deadline=None)
@given(reqs)
def test_event_skipping_equals_cycle_stepping(submissions):
    regs = _four()
    assert _schedule(regs, submissions, True) == _schedule(regs, submissions, False)


@settings(max_examples=80, deadline=None)
@given(reqs)
def test_release_invariants(submissions):
    regs = _four()
    log = _schedule(regs, submissions, False)
    by_rid = dict(enumerate(submissions))
    cfg = {r.region_id: r for r in regs}
    per_window = {}
    last_rid = {}
    assert len(log) == len(submissions)
    for cycle, region, rid in log:
        t, r = by_rid[rid]
        assert region == r
        # latency floor
        assert cycle >= t + cfg[r].latency_cycles
        # bandwidth cap per complete interval
        key = (r, cycle // cfg[r].interval_cycles)
        per_window[key] = per_window.get(key, 0) + 1
        assert per_window[key] <= cfg[r].effective_budget
        # FIFO within a region (submission order = (cycle, index))
        if r in last_rid:
            assert (by_rid[last_rid[r]][0], last_rid[r]) < (t, rid)
        last_rid[r] = rid


@settings(max_examples=50, deadline=None)
@given(reqs, st.integers(0, 200), st.one_of(st.none(), st.integers(1, 9)))
def test_region_independence(submissions, lat, bw):
    regs = _four()
    changed = list(regs)
    changed[3] = RegionConfig(3, 3 * MIB, 4 * MIB, lat, bw, 3)
    a = [e for e in _schedule(regs, submissions, False) if e[1] != 3]
    b = [e for e in _schedule(changed, submissions, False) if e[1] != 3]
    assert a == b


def test_determinism_identical_logs():
    subs = [(i * 3 % 17, i % 4) for i in range(200)]
    assert _schedule(_four(), subs, False) == _schedule(_four(), subs, False)


def test_event_queue_stable_order():
    q = EventQueue()
    q.push(5, EventKind.MIGRATION_STEP, "late")
    q.push(1, EventKind.REQUEST_ARRIVAL, "first")
    q.push(1, EventKind.RESPONSE_READY, "second")
    q.push(1, EventKind.REQUEST_ARRIVAL, "third")
    assert [q.pop().payload for _ in range(4)] == ["first", "second", "third", "late"]


@pytest.mark.parametrize("mutate,path", [
    (lambda r: [r[0], RegionConfig(1, 3 * GIB, 8 * GIB)], "regions[1].start"),
    (lambda r: [r[0], RegionConfig(1, 5 * GIB, 8 * GIB)], "regions[1].start"),
    (lambda r: [r[0], RegionConfig(1, 4 * GIB + 1, 8 * GIB)], "regions[1].start"),
    (lambda r: [r[0], RegionConfig(1, 4 * GIB, 4 * GIB)], "regions[1].end"),
    (lambda r: [r[0], RegionConfig(1, 4 * GIB, 8 * GIB, bw_budget=0)], "regions[1].bandwidth"),
    (lambda r: [r[0], RegionConfig(1, 4 * GIB, 8 * GIB, interval_cycles=0)], "regions[1].interval_cycles"),
    (lambda r: [r[0], RegionConfig(0, 4 * GIB, 8 * GIB)], "regions[1].id"),
])
def test_validate_regions_paths(mutate, path):
    with pytest.raises(ConfigError) as ei:
        validate_regions(mutate(two_regions()))
    assert ei.value.path == path


# the device floor is measured first with a zero latency register
@pytest.mark.parametrize("base", [0, 5, 20])
def test_measured_latency_is_base_plus_register(base):
    floor = measure_region(two_regions(lat1=0), 1, base_latency_cycles=base).avg_latency_cycles
    assert floor == base
    for lat in range(0, 257, 32):
        assert measure_region(two_regions(lat1=lat), 1, base_latency_cycles=base).avg_latency_cycles == floor + lat


def test_bandwidth_doubles_then_saturates():
    tp = {b: measure_region(two_regions(lat1=64, bw1=b), 1).throughput for b in (32, 64, 128, 256, 512)}
    assert tp[64] == pytest.approx(2 * tp[32])
    assert tp[128] == pytest.approx(2 * tp[64])
    assert tp[256] == pytest.approx(1.0)
    # release rate saturates at one response per cycle
    assert tp[512] == pytest.approx(1.0)


def test_budget_does_not_change_idle_latency():
    lats = {measure_region(two_regions(lat1=96, bw1=b), 1, base_latency_cycles=10).avg_latency_cycles
            for b in (32, 64, 96, 128)}
    assert lats == {106.0}


def test_measure_unknown_region():
    with pytest.raises(ConfigError):
        measure_region(two_regions(), 7)
