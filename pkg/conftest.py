import numpy as np
import pytest

from src.chanmodel import ChannelMatrix, generate_channels, partition_svd
from src.util import from_db


@pytest.fixture
def target():
    return float(from_db(20.0))


@pytest.fixture
def chan5():
    return generate_channels(5, 5, 5, rng_seed=7)


@pytest.fixture
def svd5(chan5):
    return partition_svd(chan5.h_ba)


@pytest.fixture
def diag_channel():
    """Well separated singular values 3, 1.5, 0.7 with identity singular vectors."""
    return ChannelMatrix(entries=np.diag([3.0, 1.5, 0.7]).astype(complex))


@pytest.fixture
def fat_channel():
    h = np.zeros((2, 4), dtype=complex)
    h[0, 0] = 3.0
    h[1, 1] = 1.5
    return ChannelMatrix(entries=h)
