import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_gray(rng, h, w):
    """Integer-valued gray image in 0..255 stored as float64."""
    return rng.integers(0, 256, size=(h, w)).astype(np.float64)


def random_rgb(rng, h, w):
    return rng.integers(0, 256, size=(h, w, 3)).astype(np.float64)
