"""JSON configuration: schema validation, dataclass loading, overrides.

Structure is checked against the shipped JSON schema (unknown keys are
errors); semantic checks (region tiling, metadata fitting into fast memory,
workload ranges) run afterwards. Every error is a :class:`ConfigError`
carrying the dotted path of the offending field. :func:`to_dict` serialises
a fully resolved config, defaults included, and is what reports embed as
``effective_config``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .emucore import FAST, NOMINAL_CLOCK_HZ, SLOW, RegionConfig, validate_regions
from .errors import ConfigError
from .memmodel import PAGE_SIZE
from .policies import CpuCopyParams, PebsParams, PolicyKind, PteScanParams
from .profiler import ProfilerParams
from .remap import metadata_pages_for
from .workloads import WorkloadKind, WorkloadSpec


@dataclass(frozen=True)
class RemapCacheParams:
    capacity_bytes: int = 2 << 20
    ways: int = 16
    entry_bytes: int = 8
    miss_fifo_depth: int = 64


@dataclass(frozen=True)
class MigrationParams:
    enabled: bool = True
    bytes_per_second: int | None = 256 << 20
    window_cycles: int = 100_000


@dataclass(frozen=True)
class ReportParams:
    json: str | None = None
    csv: str | None = None
    sampling_interval_cycles: int = 200_000
    record_logs: bool = False


@dataclass(frozen=True)
class SimConfig:
    regions: tuple[RegionConfig, ...]
    clock_mhz: float = NOMINAL_CLOCK_HZ / 1e6
    base_latency_cycles: int = 0
    max_outstanding: int | None = None
    seed: int = 0
    policy: PolicyKind = PolicyKind.HETEROMEM
    pte_scan: PteScanParams = PteScanParams()
    pebs: PebsParams = PebsParams()
    cpu_copy: CpuCopyParams = CpuCopyParams()
    profiler_enabled: bool = True
    profiler: ProfilerParams = ProfilerParams()
    remap_cache: RemapCacheParams = RemapCacheParams()
    migration: MigrationParams = MigrationParams()
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    report: ReportParams = ReportParams()

    @property
    def clock_hz(self) -> int:
        return int(round(self.clock_mhz * 1e6))

    @property
    def total_pages(self) -> int:
        return max(r.end for r in self.regions) // PAGE_SIZE

    @property
    def fast_pages(self) -> int:
        return sum(r.pages for r in self.regions if r.tier == FAST)

    @property
    def metadata_pages(self) -> int:
        return metadata_pages_for(self.total_pages)


def load_schema() -> dict:
    return json.loads(resources.files("tiersim").joinpath("data/config.schema.json").read_text())


def _path_of(err: jsonschema.ValidationError) -> str:
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def _parse_addr(v: Any) -> int:
    return int(v, 0) if isinstance(v, str) else int(v)


def _section(cls, raw: dict | None, path: str, **extra):
    raw = dict(raw or {})
    raw.update(extra)
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None


def from_dict(raw: dict) -> SimConfig:
    """Validate ``raw`` (parsed JSON) and build a :class:`SimConfig`."""
    schema = load_schema()
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(_path_of(err) or "<root>", err.message)

    regions = tuple(
        RegionConfig(
            region_id=r["id"],
            start=_parse_addr(r["start"]),
            end=_parse_addr(r["end"]),
            latency_cycles=r.get("latency_cycles", 0),
            bw_budget=r.get("bandwidth"),
            interval_cycles=r.get("interval_cycles", 256),
            tier=r.get("kind", SLOW),
        )
        for r in raw["regions"]
    )
    validate_regions(regions)
    _check_tiers(regions)

    seed = raw.get("seed", 0)
    prof = dict(raw.get("profiler", {}))
    profiler_enabled = prof.pop("enabled", True)
    wl = dict(raw.get("workload", {}))
    if "kind" in wl:
        wl["kind"] = WorkloadKind(wl["kind"])
    if wl.get("seed") is None:
        wl["seed"] = seed
    meta = metadata_pages_for(max(r.end for r in regions) // PAGE_SIZE)
    if wl.get("base_page") is None:
        # first host-visible page: below it sit the remapping tables
        wl["base_page"] = meta

    cfg = SimConfig(
        regions=regions,
        clock_mhz=raw.get("clock_mhz", NOMINAL_CLOCK_HZ / 1e6),
        base_latency_cycles=raw.get("base_latency_cycles", 0),
        max_outstanding=raw.get("max_outstanding"),
        seed=seed,
        policy=PolicyKind(raw.get("policy", PolicyKind.HETEROMEM.value)),
        pte_scan=_section(PteScanParams, raw.get("pte_scan"), "pte_scan"),
        pebs=_section(PebsParams, raw.get("pebs"), "pebs"),
        cpu_copy=_section(CpuCopyParams, raw.get("cpu_copy"), "cpu_copy"),
        profiler_enabled=profiler_enabled,
        profiler=_section(ProfilerParams, prof, "profiler"),
        remap_cache=_section(RemapCacheParams, raw.get("remap_cache"), "remap_cache"),
        migration=_section(MigrationParams, raw.get("migration"), "migration"),
        workload=_section(WorkloadSpec, wl, "workload"),
        report=_section(ReportParams, raw.get("report"), "report"),
    )
    validate(cfg)
    return cfg


def _check_tiers(regions) -> None:
    ordered = sorted(range(len(regions)), key=lambda i: regions[i].start)
    if regions[ordered[0]].tier != FAST:
        raise ConfigError(f"regions[{ordered[0]}].kind", "device space must start with a fast region")
    seen_slow = False
    for i in ordered:
        if regions[i].tier == SLOW:
            seen_slow = True
        elif seen_slow:
            raise ConfigError(f"regions[{i}].kind", "fast regions must precede all slow regions")


def validate(cfg: SimConfig) -> None:
    """Semantic checks that the schema cannot express."""
    total, fast, meta = cfg.total_pages, cfg.fast_pages, cfg.metadata_pages
    if meta >= fast:
        raise ConfigError("regions", f"remapping metadata needs {meta} pages but fast memory has {fast}")
    p = cfg.profiler
    if p.width & (p.width - 1):
        raise ConfigError("profiler.width", "must be a power of two")
    rc = cfg.remap_cache
    if rc.capacity_bytes // rc.entry_bytes < rc.ways:
        raise ConfigError("remap_cache.capacity_bytes", "too small for one set")
    wl = cfg.workload
    wl.validate()
    if wl.kind != WorkloadKind.TRACE:
        if wl.base_page < meta:
            raise ConfigError("workload.base_page", f"pages below {meta} hold remapping metadata")
        if wl.last_page > total:
            raise ConfigError("workload.span_pages", f"workload reaches page {wl.last_page - 1} beyond the {total}-page device")


def to_dict(cfg: SimConfig) -> dict:
    """Fully resolved config in the JSON layout accepted by :func:`from_dict`."""
    wl = asdict(cfg.workload)
    wl["kind"] = cfg.workload.kind.value
    return {
        "clock_mhz": cfg.clock_mhz,
        "base_latency_cycles": cfg.base_latency_cycles,
        "max_outstanding": cfg.max_outstanding,
        "seed": cfg.seed,
        "regions": [
            {"id": r.region_id, "kind": r.tier, "start": hex(r.start), "end": hex(r.end),
             "latency_cycles": r.latency_cycles, "bandwidth": r.bw_budget, "interval_cycles": r.interval_cycles}
            for r in cfg.regions
        ],
        "policy": cfg.policy.value,
        "pte_scan": asdict(cfg.pte_scan),
        "pebs": asdict(cfg.pebs),
        "cpu_copy": asdict(cfg.cpu_copy),
        "profiler": {"enabled": cfg.profiler_enabled, **asdict(cfg.profiler)},
        "remap_cache": asdict(cfg.remap_cache),
        "migration": asdict(cfg.migration),
        "workload": wl,
        "report": asdict(cfg.report),
    }


def load(path: str | Path, overrides: list[str] = ()) -> SimConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("<file>", f"{path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path}: invalid JSON ({exc})") from None
    return from_dict(apply_overrides(raw, overrides))


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; numeric path parts index lists, values parse as JSON when they can."""
    out = copy.deepcopy(raw)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError("--override", f"expected key=value, got {item!r}")
        parts = key.split(".")
        node: Any = out
        for depth, part in enumerate(parts[:-1]):
            sub = f"{'.'.join(parts[:depth + 1])}"
            if isinstance(node, list):
                if not part.isdigit() or int(part) >= len(node):
                    raise ConfigError(sub, "no such list element")
                node = node[int(part)]
            else:
                node = node.setdefault(part, {})
                if not isinstance(node, (dict, list)):
                    raise ConfigError(sub, "is not a section")
        last = parts[-1]
        if isinstance(node, list):
            if not last.isdigit() or int(last) >= len(node):
                raise ConfigError(key, "no such list element")
            node[int(last)] = _parse_value(value)
        else:
            node[last] = _parse_value(value)
    return out


def with_changes(cfg: SimConfig, **changes) -> SimConfig:
    """``dataclasses.replace`` that re-runs semantic validation."""
    out = replace(cfg, **changes)
    validate(out)
    return out


