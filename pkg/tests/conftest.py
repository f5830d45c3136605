import numpy as np
import pytest

from imchirp.waveform import desk_scale, fdss_for, ieee_80211ay


@pytest.fixture(scope="session")
def full_linear():
    return ieee_80211ay("linear")


@pytest.fixture(scope="session")
def full_sin():
    return ieee_80211ay("sinusoidal")


@pytest.fixture(scope="session")
def small_linear():
    return desk_scale("linear")


@pytest.fixture
def rng():
    return np.random.default_rng(20201)


def brute_pairs(M, S):
    """All pairs i < j with circular distance >= S, lexicographic."""
    return [(i, j) for i in range(M) for j in range(i + 1, M) if min(j - i, M - j + i) >= S]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
