import numpy as np
import pytest

from entrain import PeriodicControl, solve_periodic
from entrain.models import build_master, build_rfm, MasterChainSpec

TWO_PI = 2 * np.pi


def trig_perturbation(m, period, rng, harmonics=3, k=128, channels=None):
    """Seeded zero-mean trigonometric perturbation on the given channels."""
    t = period * np.arange(k) / k
    S = np.zeros((k, m))
    chans = range(m) if channels is None else channels
    for c in chans:
        for j in range(1, harmonics + 1):
            a, b = rng.normal(size=2) / j
            S[:, c] += a * np.sin(2 * np.pi * j * t / period) + b * np.cos(2 * np.pi * j * t / period)
    return PeriodicControl(period, S, "trig")


@pytest.fixture(scope="session")
def rfm3():
    return build_rfm(3)


@pytest.fixture(scope="session")
def rfm3_harmonic():
    return PeriodicControl.harmonic([1, 1.2, 0.8, 1.1], [0.3, 0.2, 0.1, 0.25], 1.0,
                                    phase=[0, 1, 2, 3], k=128)


@pytest.fixture(scope="session")
def rfm3_solution(rfm3, rfm3_harmonic):
    return solve_periodic(rfm3, rfm3_harmonic)


@pytest.fixture(scope="session")
def master3():
    return build_master(MasterChainSpec(3))


# rates used across the master-equation tests (row-major, zero diagonal)
MASTER3_RATES = np.array([[0.0, 1.0, 0.5], [2.0, 0.0, 1.5], [0.7, 1.2, 0.0]])


# acceptance criterion -> (passed, detail); printed in the terminal summary
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
