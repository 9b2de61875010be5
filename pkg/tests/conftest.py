import dataclasses

import numpy as np
import pytest

from modalnode.dataset import PROFILES, generate_dataset


def tiny_profile(n_traj=3, modes=4, duration=0.02, seed=5):
    """A few short, low-mode trajectories from the Table-1 training ranges."""
    base = PROFILES["desk-string"]
    ranges = dataclasses.replace(base.ranges, n_traj=n_traj, duration=duration, seed=seed)
    return dataclasses.replace(base, name="tiny", ranges=ranges, modes=modes)


@pytest.fixture(scope="session")
def tiny_bundles():
    return generate_dataset(tiny_profile())[1]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
