import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import tiny_arrays  # noqa: E402

from raresir.scenario import city_block_window, generate_synthetic, scenario_from_linear  # noqa: E402


@pytest.fixture(scope="session")
def synthetic():
    """100 x 100 m open window, alpha = 3; calibrated tau is exactly -40 dB."""
    return generate_synthetic(100, 100, 1.0, alpha=3.0)


@pytest.fixture(scope="session")
def coarse():
    """10 x 10 tiles of 10 m, alpha = 2: dense enough at lambda = 0.5 for the LLN check."""
    return generate_synthetic(10, 10, 10.0, alpha=2.0)


@pytest.fixture(scope="session")
def city_blocks():
    return city_block_window()


@pytest.fixture(scope="session")
def tiny():
    ell, blocked = tiny_arrays()
    return scenario_from_linear(ell, blocked, name="tiny")


@pytest.fixture(scope="session")
def small():
    """12 x 8 window with one obstacle; cheap enough for many replicates."""
    return generate_synthetic(12, 8, 1.0, alpha=2.5, obstacles=[(0, 0, 3, 3)])


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
