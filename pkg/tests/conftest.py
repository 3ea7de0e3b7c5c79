import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sca.net import CodecNet, NetworkConfig  # noqa: E402


def tiny_config(**overrides):
    """Every structural element of the desk net at a size fit for loops."""
    fields = dict(
        input_shape=(1, 8, 8),
        block_ratios=(1, 2, 1, 2, 1, 2),
        block_channels=(4, 4, 4, 6, 6, 2),
        L=2,
        m=6,
        k=2,
    )
    fields.update(overrides)
    return NetworkConfig(**fields)


@pytest.fixture
def tiny_net():
    return CodecNet(tiny_config(), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
