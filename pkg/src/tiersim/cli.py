"""Command-line entry point: ``tiersim <subcommand>``.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 64 usage error.
``SIM_LOG`` (error, info, debug) sets log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import apply_overrides, from_dict, load, to_dict
from .emucore import NOMINAL_CLOCK_HZ, measure_region
from .errors import ConfigError, FormatError, SimError
from .metrics import emit_report
from .sim import run_sim
from .workloads import WorkloadKind, WorkloadSpec, make_generator, trace_write

log = logging.getLogger("tiersim")

EXIT_CONFIG, EXIT_RUNTIME, EXIT_USAGE = 1, 2, 64
HOP_NS = 70.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _setup_logging() -> None:
    level = os.environ.get("SIM_LOG", "error").strip().lower()
    levels = {"error": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("<file>", f"{path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path}: invalid JSON ({exc})") from None


def cmd_run(args) -> int:
    cfg = load(args.config, args.override)
    log.info("running policy=%s workload=%s seed=%d", cfg.policy.value, cfg.workload.kind.value, cfg.seed)
    metrics = run_sim(cfg)
    json_path = args.out_json or cfg.report.json
    csv_path = args.out_csv or cfg.report.csv
    emit_report(metrics, json_path, csv_path, to_dict(cfg))
    summary = {
        "total_requests": metrics.total_requests,
        "total_cycles": metrics.total_cycles,
        "slow_ratio": round(metrics.slow_ratio, 6),
        "migrations": metrics.migrations_device + metrics.migrations_policy,
        "read_latency_mean": round(metrics.read_latency_mean, 3),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    cfg = load(args.config, args.override)
    print(f"ok: {len(cfg.regions)} regions, {cfg.total_pages} pages ({cfg.fast_pages} fast), policy {cfg.policy.value}")
    return 0


def _workload_from_json(raw: dict) -> WorkloadSpec:
    raw = dict(raw.get("workload", raw))
    if "kind" in raw:
        raw["kind"] = WorkloadKind(raw["kind"])
    if raw.get("base_page") is None:
        raw.pop("base_page", None)
    if raw.get("seed") is None:
        raw.pop("seed", None)
    try:
        spec = WorkloadSpec(**raw)
    except TypeError as exc:
        raise ConfigError("workload", str(exc)) from None
    spec.validate()
    if spec.kind == WorkloadKind.TRACE:
        raise ConfigError("workload.kind", "gen-trace needs a synthetic workload")
    return spec


def cmd_gen_trace(args) -> int:
    spec = _workload_from_json(_read_json(args.spec))
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    n = trace_write(args.out, make_generator(spec))
    print(f"wrote {n} records to {args.out}")
    return 0


def _probe_values(text: str | None, default: list[int]) -> list[int]:
    if not text:
        return default
    try:
        return [int(v, 0) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values: expected comma separated integers, got {text!r}") from None


def cmd_probe(args) -> int:
    raw = apply_overrides(_read_json(args.config), args.override)
    cfg = from_dict(raw)
    idx = next((i for i, r in enumerate(cfg.regions) if r.region_id == args.region), None)
    if idx is None:
        raise ConfigError("--region", f"no region with id {args.region}")
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        if args.what == "latency":
            values = _probe_values(args.values, list(range(0, 257, 32)))
            column = "latency_register"
        else:
            values = _probe_values(args.values, [32, 64, 96, 128, 160, 192, 224, 256])
            column = "bw_budget"
        w.writerow([column, "avg_latency_cycles", "throughput_per_cycle", "throughput_gbps"])
        clock = cfg.clock_hz
        for v in values:
            regions = list(cfg.regions)
            r = regions[idx]
            regions[idx] = replace(r, latency_cycles=v) if args.what == "latency" else replace(r, bw_budget=v)
            m = measure_region(regions, args.region, base_latency_cycles=cfg.base_latency_cycles)
            gbps = m.throughput * clock * 64 / 1e9
            w.writerow([v, f"{m.avg_latency_cycles:.3f}", f"{m.throughput:.6f}", f"{gbps:.4f}"])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_topo(args) -> int:
    if args.hops < 0:
        raise UsageError("--hops must be >= 0")
    extra_ns = args.hops * args.hop_ns
    clock_hz = args.clock_mhz * 1e6
    cycles = int(round(extra_ns * 1e-9 * clock_hz))
    print(json.dumps({
        "hops": args.hops,
        "hop_ns": args.hop_ns,
        "extra_latency_ns": extra_ns,
        "clock_mhz": args.clock_mhz,
        "latency_cycles": cycles,
        "region": {"kind": "slow", "latency_cycles": cycles},
    }, indent=2))
    return 0


def cmd_sweep(args) -> int:
    raw = _read_json(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    values = [v for v in args.values.split(",") if v]
    if not values:
        raise UsageError("--values must list at least one value")
    for v in values:
        cfg = from_dict(apply_overrides(raw, [*args.override, f"{args.param}={v}"]))
        metrics = run_sim(cfg)
        stem = f"{args.param.replace('.', '_')}={v}"
        emit_report(metrics, out_dir / f"{stem}.json", out_dir / f"{stem}.csv", to_dict(cfg))
        print(f"{stem}: slow_ratio={metrics.slow_ratio:.6f} migrations={metrics.migrations_device + metrics.migrations_policy}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tiersim", description="Tiered CXL memory simulator")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, e.g. regions.1.latency_cycles=64 (repeatable)")

    r = sub.add_parser("run", help="run one simulation")
    with_config(r)
    r.add_argument("--out-json", help="metrics JSON path (overrides report.json)")
    r.add_argument("--out-csv", help="time-series CSV path (overrides report.csv)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a config and exit")
    with_config(v)
    v.set_defaults(func=cmd_validate)

    g = sub.add_parser("gen-trace", help="write a synthetic workload as an HTRC trace")
    g.add_argument("--spec", required=True, help="JSON workload spec (or a config with a workload section)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen_trace)

    pr = sub.add_parser("probe", help="latency or bandwidth sweep of one region, as CSV")
    pr.add_argument("what", choices=["latency", "bandwidth"])
    with_config(pr)
    pr.add_argument("--region", type=int, required=True)
    pr.add_argument("--values", help="comma separated register values to sweep")
    pr.add_argument("--out", help="CSV path (default stdout)")
    pr.set_defaults(func=cmd_probe)

    t = sub.add_parser("topo", help="suggest region latency for a number of switch hops")
    t.add_argument("--hops", type=int, required=True)
    t.add_argument("--hop-ns", type=float, default=HOP_NS)
    t.add_argument("--clock-mhz", type=float, default=NOMINAL_CLOCK_HZ / 1e6)
    t.set_defaults(func=cmd_topo)

    s = sub.add_parser("sweep", help="run a config once per value of one parameter")
    with_config(s)
    s.add_argument("--param", required=True, help="dotted config path to vary")
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, SimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
