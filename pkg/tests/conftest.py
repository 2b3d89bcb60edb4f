import numpy as np
import pytest

from uavppo.env import EnvConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cfg():
    return EnvConfig(n_mdcs=3, n_channels=2, area_m=100.0, data_size_bits=5e6, placement_seed=3)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
