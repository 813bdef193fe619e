"""Shared fixtures and the acceptance summary printed at the end of a run."""

import pytest
from hypothesis import HealthCheck, settings

from tandem_aoi.params import SystemParams

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def p0():
    """Baseline point: lam=0.5, p=0.5, mu=1, exponential unit-mean service."""
    return SystemParams(0.5, 0.5)


@pytest.fixture
def acceptance_line():
    """Record one pass/fail line per acceptance criterion."""

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
