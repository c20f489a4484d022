"""Run metrics, report files, and time-series helpers."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path


@dataclass
class SimMetrics:
    """Exact counters of one run. Time series have one entry per sampling interval."""

    total_requests: int = 0
    total_cycles: int = 0
    sampling_interval_cycles: int = 200_000
    reads_by_region: dict[str, int] = field(default_factory=dict)
    writes_by_region: dict[str, int] = field(default_factory=dict)
    fast_accesses: int = 0
    slow_accesses: int = 0
    accesses_series: list[int] = field(default_factory=list)
    slow_accesses_series: list[int] = field(default_factory=list)
    slow_ratio_series: list[float] = field(default_factory=list)
    migrations_series: list[int] = field(default_factory=list)
    migrations_device: int = 0
    migrations_policy: int = 0
    migration_log: list[list[int]] = field(default_factory=list)
    pairs_emitted: int = 0
    pairs_discarded: int = 0
    dropped_hot: int = 0
    max_pairs_per_window: int = 0
    max_migration_bytes_per_window: int = 0
    migration_byte_cap_per_window: int | None = None
    remap_cache_hits: int = 0
    remap_cache_misses: int = 0
    remap_cache_hit_rate: float = 0.0
    metadata_reads: int = 0
    read_latency_mean: float = 0.0
    read_latency_p50: int = 0
    read_latency_p99: int = 0
    read_latency_max: int = 0
    read_latency_histogram: dict[str, int] = field(default_factory=dict)
    policy_cpu_cycles: int = 0
    profiler: dict[str, int] = field(default_factory=dict)

    @property
    def slow_ratio(self) -> float:
        n = self.fast_accesses + self.slow_accesses
        return self.slow_accesses / n if n else 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimMetrics":
        return cls(**d)


def latency_summary(hist: Counter) -> dict:
    """Mean, p50, p99 and max from an exact latency histogram."""
    n = sum(hist.values())
    if not n:
        return dict(read_latency_mean=0.0, read_latency_p50=0, read_latency_p99=0, read_latency_max=0)
    keys = sorted(hist)
    total = sum(k * hist[k] for k in keys)

    def pct(q):
        rank = max(1, math.ceil(q * n))
        seen = 0
        for k in keys:
            seen += hist[k]
            if seen >= rank:
                return k
        return keys[-1]

    return dict(read_latency_mean=total / n, read_latency_p50=pct(0.5), read_latency_p99=pct(0.99),
                read_latency_max=keys[-1])


def ratio_series(accesses: list[int], slow: list[int]) -> list[float]:
    return [s / a if a else 0.0 for a, s in zip(accesses, slow)]


def convergence_interval(series: list[float], tol: float = 0.02, tail_fraction: float = 0.2) -> int:
    """First interval index from which the series stays within ``tol`` of its tail mean.

    The tail is the final ``tail_fraction`` of the series.
    """
    if not series:
        return 0
    k = max(1, math.ceil(len(series) * tail_fraction))
    target = sum(series[-k:]) / k
    idx = len(series)
    for i in range(len(series) - 1, -1, -1):
        if abs(series[i] - target) > tol:
            break
        idx = i
    return idx


def report_bytes(metrics: SimMetrics, effective_config: dict | None = None) -> bytes:
    doc = {"metrics": metrics.to_dict()}
    if effective_config is not None:
        doc["effective_config"] = effective_config
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def emit_report(metrics: SimMetrics, json_path: str | Path | None = None, csv_path: str | Path | None = None,
                effective_config: dict | None = None) -> None:
    """Write the full metrics JSON and the per-interval CSV time series."""
    if json_path is not None:
        try:
            Path(json_path).write_bytes(report_bytes(metrics, effective_config))
        except OSError as exc:
            raise OSError(f"{json_path}: {exc.strerror or exc}") from exc
    if csv_path is not None:
        try:
            with open(csv_path, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["interval", "start_cycle", "accesses", "slow_accesses", "slow_ratio", "migrations"])
                step = metrics.sampling_interval_cycles
                for i, (a, s, r, m) in enumerate(zip(metrics.accesses_series, metrics.slow_accesses_series,
                                                     metrics.slow_ratio_series, metrics.migrations_series)):
                    w.writerow([i, i * step, a, s, f"{r:.6f}", m])
        except OSError as exc:
            raise OSError(f"{csv_path}: {exc.strerror or exc}") from exc


def load_report(path: str | Path) -> tuple[SimMetrics, dict | None]:
    doc = json.loads(Path(path).read_text())
    return SimMetrics.from_dict(doc["metrics"]), doc.get("effective_config")
