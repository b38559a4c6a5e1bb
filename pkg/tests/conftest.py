from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from phaseless_bayes import ObstacleParams, ScatteringSetup, make_curve  # noqa: E402
from phaseless_bayes.geometry import KITE_EXACT  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def kite():
    return ObstacleParams.kite(KITE_EXACT)


@pytest.fixture(scope="session")
def kite_curve(kite):
    return make_curve(kite)


@pytest.fixture(scope="session")
def small_setup():
    return ScatteringSetup(k=2.0, R=6.0, L=8, M=8, n_quad=32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
