import numpy as np
import pytest

from heraldsim import homodyne_sim as hs
from heraldsim.signal_core import CavityFilter, PulseProfile

# diagonals measured for the 49 ns pump pulse, and for the 20 ns one
REF_POPULATIONS = (0.392, 0.595, 0.010)
REF_POPULATIONS_20NS = (0.542, 0.458)


@pytest.fixture(scope="session")
def opo():
    return CavityFilter.from_mhz(2.2)


@pytest.fixture(scope="session")
def mode49(opo):
    return hs.optimal_mode(PulseProfile(49.0), opo)


@pytest.fixture(scope="session")
def ref_state():
    return hs.TargetState.normalized(REF_POPULATIONS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the test run
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(name: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
