import numpy as np
import pytest

from cylfbm.fbm import TimeGrid

HURSTS = (0.25, 0.75)


@pytest.fixture(params=HURSTS, ids=lambda h: f"H{h}")
def hurst(request):
    return request.param


@pytest.fixture
def grid2048():
    return TimeGrid(1.0, 2048)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
