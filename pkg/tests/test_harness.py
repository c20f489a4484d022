import csv
import json
import math

import numpy as np
import pytest

from configs import SMALL, TREND, cfg, raw
from tiersim.cli import main
from tiersim.config import apply_overrides, from_dict, to_dict
from tiersim.errors import ConfigError
from tiersim.memmodel import BackingStore, oracle_apply
from tiersim.metrics import convergence_interval, latency_summary, load_report
from tiersim.sim import Simulator, run_and_report, run_sim
from tiersim.workloads import make_generator


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_none_policy_with_data_in_fast_never_touches_slow():
    m = run_sim(cfg(SMALL, 'policy="none"', "workload.span_pages=256"))
    assert m.slow_accesses == 0 and m.slow_ratio == 0.0 and m.migrations_policy == 0
    assert set(m.slow_ratio_series) == {0.0}


def test_heteromem_steady_state_matches_residual_mass_oracle():
    c = cfg(TREND, "workload.ops=300000")
    sim = Simulator(c)
    m = sim.run()
    gen = make_generator(c.workload)
    w = 1.0 / np.arange(1, c.workload.working_set_pages + 1)
    w /= w.sum()
    in_slow = np.array([sim.device.remap.translate_direct(int(h)) >= sim.fast_pages for h in gen.pages])
    residual = float(w[in_slow].sum())
    n = m.total_cycles // m.sampling_interval_cycles
    k = max(1, n // 5)
    acc, slow = sum(m.accesses_series[n - k:n]), sum(m.slow_accesses_series[n - k:n])
    assert sum(m.migrations_series[n - k:]) == 0
    sigma = math.sqrt(residual * (1 - residual) / acc)
    assert abs(slow / acc - residual) <= 4 * sigma
    assert slow / acc < 0.05
    # after warm-up the ratio only goes down, up to sampling noise
    series = m.slow_ratio_series[:n]
    assert all(b <= a + 0.01 for a, b in zip(series[1:], series[2:]))


def test_profiler_is_off_the_critical_path():
    on = Simulator(cfg(SMALL, "migration.enabled=false"), record=True)
    on.run()
    off = Simulator(cfg(SMALL, "profiler.enabled=false"), record=True)
    off.run()
    assert on.latencies == off.latencies and on.release_cycles == off.release_cycles
    assert on.profiler.stats["pairs"] > 0 and off.profiler is None


@pytest.mark.parametrize("policy", ["heteromem", "pebs", "pte_scan", "none"])
def test_accounting_closure(policy):
    m = run_sim(cfg(SMALL, f'policy="{policy}"', "workload.read_fraction=0.8"))
    assert m.total_requests == sum(m.reads_by_region.values()) + sum(m.writes_by_region.values()) == 40000
    assert m.fast_accesses + m.slow_accesses == m.total_requests == sum(m.accesses_series)
    assert sum(m.read_latency_histogram.values()) == sum(m.reads_by_region.values())
    migs = m.migrations_device + m.migrations_policy
    assert len(m.migration_log) == migs == sum(m.migrations_series)
    if policy == "heteromem":
        assert m.pairs_emitted == migs + m.pairs_discarded
        logged = [tuple(e[2:]) for e in m.migration_log]
        assert len(set(zip(logged, [e[0] for e in m.migration_log]))) == len(logged)
    assert len(m.accesses_series) == math.ceil(m.total_cycles / m.sampling_interval_cycles)


def test_identical_runs_give_identical_bytes(tmp_path):
    c = cfg(SMALL, "workload.read_fraction=0.7")
    outs = []
    for i in range(2):
        run_and_report(c, tmp_path / f"{i}.json", tmp_path / f"{i}.csv")
        outs.append(((tmp_path / f"{i}.json").read_bytes(), (tmp_path / f"{i}.csv").read_bytes()))
    assert outs[0] == outs[1]


def test_report_round_trip_and_effective_config(tmp_path):
    c = cfg(SMALL)
    m = run_and_report(c, tmp_path / "r.json", tmp_path / "r.csv")
    back, eff = load_report(tmp_path / "r.json")
    assert back == m
    assert from_dict(eff) == c and to_dict(from_dict(eff)) == eff
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert len(rows) == len(m.slow_ratio_series)
    assert [int(r["migrations"]) for r in rows] == m.migrations_series


def test_effective_config_lists_every_default():
    eff = to_dict(cfg({"regions": SMALL["regions"]}))
    assert eff["profiler"]["hot_threshold"] == 8 and eff["migration"]["bytes_per_second"] == 256 << 20
    assert eff["report"]["sampling_interval_cycles"] == 200_000 and eff["workload"]["base_page"] == 16


def test_overrides():
    out = apply_overrides(SMALL, ["regions.1.latency_cycles=64", "profiler.width=2048", 'policy="pebs"',
                                  "report.json=out.json"])
    assert out["regions"][1]["latency_cycles"] == 64 and out["profiler"]["width"] == 2048
    assert out["policy"] == "pebs" and out["report"]["json"] == "out.json"
    assert SMALL["regions"][1]["latency_cycles"] == 128
    with pytest.raises(ConfigError):
        apply_overrides(SMALL, ["regions.5.latency_cycles=1"])
    with pytest.raises(ConfigError):
        apply_overrides(SMALL, ["novalue"])


@pytest.mark.parametrize("override,path", [
    ("regions.1.start=1048576", "regions[1].start"),
    ("profiler.width=1000", "profiler.width"),
    ("bogus=1", "<root>"),
    ("profiler.nope=1", "profiler"),
    ('regions.0.kind="slow"', "regions[0].kind"),
    ("workload.span_pages=9000", "workload.span_pages"),
    ("workload.base_page=3", "workload.base_page"),
])
def test_config_errors_carry_paths(override, path):
    with pytest.raises(ConfigError) as e:
        cfg(SMALL, override)
    assert e.value.path == path


def test_metadata_must_fit_in_fast():
    doc = raw(SMALL, "regions.0.end=4096", "regions.1.start=4096")
    with pytest.raises(ConfigError) as e:
        from_dict(doc)
    assert e.value.path == "regions"


def test_latency_summary_and_convergence_helpers():
    s = latency_summary({10: 98, 50: 1, 90: 1})
    assert s == dict(read_latency_mean=11.2, read_latency_p50=10, read_latency_p99=50, read_latency_max=90)
    assert convergence_interval([0.5, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]) == 2
    assert convergence_interval([]) == 0


# ---------------------------------------------------------------- CLI

def test_cli_validate_ok_and_overlap(tmp_path, capsys):
    assert main(["validate", "--config", _write(tmp_path, SMALL)]) == 0
    bad = raw(SMALL, "regions.1.start=1048576")
    assert main(["validate", "--config", _write(tmp_path, bad)]) == 1
    assert "regions[1].start" in capsys.readouterr().err


def test_cli_unknown_key_is_config_error(tmp_path, capsys):
    assert main(["validate", "--config", _write(tmp_path, raw(SMALL, "profile.width=2"))]) == 1
    assert "profile" in capsys.readouterr().err


def test_cli_usage_error(capsys):
    assert main(["frobnicate"]) == 64
    assert main(["run"]) == 64


def test_cli_missing_trace_is_runtime_error(tmp_path):
    doc = raw(SMALL, 'workload.kind="trace"', f'workload.path="{tmp_path / "missing.htrc"}"')
    assert main(["run", "--config", _write(tmp_path, doc)]) == 2


def test_cli_topo_two_hops(capsys):
    assert main(["topo", "--hops", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["extra_latency_ns"] == 140 and out["latency_cycles"] == 28


def test_cli_probe_latency_csv(tmp_path):
    out = tmp_path / "lat.csv"
    doc = raw(SMALL, "base_latency_cycles=5")
    assert main(["probe", "latency", "--config", _write(tmp_path, doc), "--region", "1", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert [int(r["latency_register"]) for r in rows] == list(range(0, 257, 32))
    assert all(float(r["avg_latency_cycles"]) == 5 + int(r["latency_register"]) for r in rows)


def test_cli_probe_bandwidth_csv(tmp_path):
    out = tmp_path / "bw.csv"
    assert main(["probe", "bandwidth", "--config", _write(tmp_path, SMALL), "--region", "1", "--values", "32,64",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert [float(r["throughput_per_cycle"]) for r in rows] == [0.125, 0.25]


def test_cli_run_writes_json_and_csv(tmp_path, capsys):
    j, c = tmp_path / "m.json", tmp_path / "m.csv"
    assert main(["run", "--config", _write(tmp_path, SMALL), "--override", "workload.ops=5000",
                 "--out-json", str(j), "--out-csv", str(c)]) == 0
    summary = json.loads(capsys.readouterr().out)
    m, eff = load_report(j)
    assert summary["total_requests"] == m.total_requests == 5000 and eff["workload"]["ops"] == 5000
    assert len(list(csv.reader(open(c)))) - 1 == len(m.slow_ratio_series)


def test_cli_gen_trace_then_replay(tmp_path):
    spec = _write(tmp_path, {"kind": "zipf", "working_set_pages": 64, "ops": 500, "base_page": 16}, "spec.json")
    trace = tmp_path / "w.htrc"
    assert main(["gen-trace", "--spec", spec, "--out", str(trace), "--seed", "3"]) == 0
    doc = raw(SMALL, 'workload.kind="trace"', f'workload.path="{trace}"')
    j = tmp_path / "t.json"
    assert main(["run", "--config", _write(tmp_path, doc), "--out-json", str(j)]) == 0
    assert load_report(j)[0].total_requests == 500


def test_cli_sweep(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", _write(tmp_path, SMALL), "--override", "workload.ops=3000",
                 "--param", "regions.1.latency_cycles", "--values", "64,128", "--out-dir", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["regions_1_latency_cycles=128.csv", "regions_1_latency_cycles=128.json",
                     "regions_1_latency_cycles=64.csv", "regions_1_latency_cycles=64.json"]
    # identical access pattern, so the comparative CSVs line up interval for interval
    a = load_report(out / "regions_1_latency_cycles=64.json")[0]
    b = load_report(out / "regions_1_latency_cycles=128.json")[0]
    assert a.read_latency_mean < b.read_latency_mean


def test_cli_comparative_csvs_align(tmp_path):
    lengths = set()
    for policy in ("heteromem", "pebs", "pte_scan"):
        c = tmp_path / f"{policy}.csv"
        assert main(["run", "--config", _write(tmp_path, SMALL), "--override", f'policy="{policy}"',
                     "--out-csv", str(c)]) == 0
        rows = list(csv.DictReader(open(c)))
        lengths.add(tuple(r["start_cycle"] for r in rows[:3]))
    assert len(lengths) == 1


def test_timed_run_returns_oracle_data():
    c = cfg(SMALL, "workload.read_fraction=0.5", "profiler.hot_threshold=2", "workload.ops=60000")
    reqs = list(make_generator(c.workload))
    sim = Simulator(c, reqs)
    sim.capture_reads = True
    m = sim.run()
    oracle = BackingStore(c.total_pages)
    want = {i: oracle_apply(oracle, r) for i, r in enumerate(reqs)}
    assert m.migrations_device > 100 and len(sim.read_results) == sum(m.reads_by_region.values())
    assert all(data == want[rid] for rid, data in sim.read_results)


def test_blocked_requests_wait_for_one_swap_at_most():
    # back-to-back swaps must not starve requests queued behind the first one
    c = cfg(TREND, "workload.ops=50000")
    m = run_sim(c)
    swap = max(end - start for start, end, *_ in m.migration_log)
    assert m.migrations_device >= 64 and m.read_latency_max <= swap + 128
