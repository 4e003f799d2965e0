import pytest

from mkid_twin.core import Backend
from mkid_twin.pipeline import run_closed_loop, single_tone_config

ACCEPTANCE_LINES = []


def record(criterion, ok, detail=""):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    return ok


@pytest.fixture(scope="session")
def legacy_fixed():
    return run_closed_loop(single_tone_config(modulus=1 << 16, backend=Backend.FIXED))


@pytest.fixture(scope="session")
def mitigated_fixed():
    return run_closed_loop(single_tone_config(modulus=65520, backend=Backend.FIXED))


@pytest.fixture(scope="session")
def legacy_float():
    return run_closed_loop(single_tone_config(modulus=1 << 16, backend=Backend.FLOAT))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
