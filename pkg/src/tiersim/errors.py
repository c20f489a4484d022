"""Exception types shared across the simulator."""

from __future__ import annotations


class SimError(Exception):
    """Base class for all simulator errors."""


class OutOfRange(SimError, IndexError):
    """An address or page index falls outside the addressable space."""


class Unmapped(SimError):
    """A device address is not covered by any configured region."""


class ConfigError(SimError):
    """Invalid configuration. ``path`` names the offending field, e.g. ``regions[1].start``."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class Busy(SimError):
    """A migration transaction is already in flight."""


class AlignmentError(SimError):
    """A migration address is not page aligned."""


class SameRegionError(SimError):
    """Both pages of a migration pair live in the same region (or are the same page)."""


class Exhausted(SimError):
    """A workload generator has produced all of its requests."""


class FormatError(SimError):
    """Malformed trace file. ``offset`` is the byte offset of the problem."""

    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"offset {offset}: {message}")
