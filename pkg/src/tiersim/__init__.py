"""Deterministic simulator of a CXL-attached tiered memory device.

Region emulation (per-region latency and bandwidth), a device-side tiering
pipeline (remapping, hot/cold profiling, swap migration), host-side baseline
policies, synthetic workloads and a reporting harness.
"""

from .config import SimConfig, from_dict, load, to_dict
from .emucore import EmuCore, RegionConfig, measure_region, region_of
from .errors import (AlignmentError, Busy, ConfigError, Exhausted, FormatError, OutOfRange, SameRegionError,
                     SimError, Unmapped)
from .memmodel import BackingStore, MemRequest, Op, oracle_apply
from .metrics import SimMetrics, emit_report
from .sim import Simulator, run_requests, run_sim

__version__ = "0.1.0"
