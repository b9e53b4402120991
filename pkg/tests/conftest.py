"""Shared fixtures: surrogate traces and fitted predictor banks.

Heavy artifacts are session-scoped; everything is seeded, so the suite is
deterministic end to end.
"""

import numpy as np
import pytest

from vrslice import TraceMeta, surrogate_trace
from vrslice.simulation import fit_predictor_bank
from vrslice.slicing import LatencyBudget

# Baseline operating point used throughout: 30 Mb/s at 60 fps, and the
# latency split T_max=50ms, delta_u=7ms, tau_p=5ms, tau_r=5ms.
RATE = 30e6
FPS = 60.0


@pytest.fixture(scope="session")
def meta30():
    return TraceMeta(content="arcade", rate_bps=RATE, fps=FPS, source="synthetic")


@pytest.fixture(scope="session")
def budget_table1():
    return LatencyBudget(t_max=0.050, delta_u=0.007, tau_p=0.005, tau_r=0.005, fps=FPS)


@pytest.fixture(scope="session")
def surrogate50k(meta30):
    return surrogate_trace(meta30, 50_000, seed=101)


@pytest.fixture(scope="session")
def surrogate24k(meta30):
    return surrogate_trace(meta30, 24_000, seed=11)


@pytest.fixture(scope="session")
def train30(meta30):
    """Training trace kept separate from the simulated ones."""
    return surrogate_trace(meta30, 40_000, seed=999)


@pytest.fixture(scope="session")
def bank6(train30):
    return fit_predictor_bank([train30], interval_frames=6, n_memory=6)


@pytest.fixture(scope="session")
def bank1(train30):
    return fit_predictor_bank([train30], interval_frames=1, n_memory=6)
