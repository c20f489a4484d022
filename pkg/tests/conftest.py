import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Remember one acceptance verdict; all verdicts are printed in the terminal summary."""
    _criteria[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(_criteria[number])


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_criteria):
            terminalreporter.write_line(_criteria[n])


@pytest.fixture
def two_tier():
    """Small two-region layout: 512 fast pages, 7680 slow pages at +128 cycles."""
    from tiersim.emucore import RegionConfig

    mib = 1 << 20
    return (RegionConfig(0, 0, 2 * mib, 0, None, 256, "fast"),
            RegionConfig(1, 2 * mib, 32 * mib, 128, None, 256, "slow"))
