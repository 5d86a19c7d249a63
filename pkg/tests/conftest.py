import sys

import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lbmimo.bd import build_precoder_set
from lbmimo.channel import ChannelSet, SystemConfig, draw_channel_batch

SCENARIOS = ((2, 2), (2, 3), (3, 2))


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_precoders(rng, n_rx=2, n_users=2):
    cfg = SystemConfig.scenario(n_rx, n_users)
    channels = ChannelSet(draw_channel_batch(rng, cfg, 1)[0])
    return cfg, channels, build_precoder_set(channels, cfg)


def complex_matrices(max_dim=6, min_dim=1):
    finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)

    @st.composite
    def build(draw):
        m = draw(st.integers(min_dim, max_dim))
        n = draw(st.integers(min_dim, max_dim))
        re = draw(arrays(np.float64, (m, n), elements=finite))
        im = draw(arrays(np.float64, (m, n), elements=finite))
        return re + 1j * im

    return build()


def gaussian_matrices(max_dim=8):
    """Random Gaussian matrices drawn from a hypothesis-chosen seed (well conditioned w.p. 1)."""

    @st.composite
    def build(draw):
        m = draw(st.integers(1, max_dim))
        n = draw(st.integers(1, max_dim))
        seed = draw(st.integers(0, 2**32 - 1))
        return random_complex(np.random.default_rng(seed), m, n)

    return build()
