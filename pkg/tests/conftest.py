import math

import pytest

from bessramp import IncrementLaw, SimulationConfig
from bessramp.simulate import simulate

# Reference operating point: beta = 0.6 1/MW, a = 1.503 MW, P_max = 150 MW.
BETA = 0.6
A_MW = 1.503
A_TILDE = 0.9018
P_MAX_MW = 150.0
N_REFERENCE = 5_000_000

ACCEPTANCE_LOG = []


@pytest.fixture
def acceptance():
    """Record (criterion, description, passed, detail) lines for the terminal summary."""

    def record(number, description, passed, detail=""):
        ACCEPTANCE_LOG.append((number, description, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, passed, detail in sorted(ACCEPTANCE_LOG, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {description} {detail}".rstrip())


def reference_config(p_max=P_MAX_MW, seed=1, n_steps=N_REFERENCE):
    return SimulationConfig(
        IncrementLaw.simple(BETA), n_steps, A_MW, p_max=p_max, seed=seed
    )


@pytest.fixture(scope="session")
def bounded_run():
    """Finite-capacity reference trace (normalized capacity 90)."""
    return simulate(reference_config())


@pytest.fixture(scope="session")
def unbounded_run():
    return simulate(reference_config(p_max=math.inf))
