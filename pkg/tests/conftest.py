import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from grrail.volume_io import RoiMask, VoxelGrid

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def make_pair(values, mask=None, spacing=(1.0, 1.0, 1.0)):
    values = np.asarray(values, dtype=np.float64)
    if mask is None:
        mask = np.ones(values.shape, dtype=bool)
    return VoxelGrid(values, spacing), RoiMask(np.asarray(mask, dtype=bool))


@pytest.fixture
def pair_factory():
    return make_pair


@pytest.fixture
def two_block_pair():
    """8x8x8 volume: x < 4 at 0, x >= 4 at 100, whole volume masked."""
    v = np.zeros((8, 8, 8))
    v[4:] = 100.0
    return make_pair(v)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
