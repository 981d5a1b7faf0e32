import functools

import numpy as np
import pytest

from omniloc.synth import generate_scene


@functools.lru_cache(maxsize=None)
def cached_scene(seed: int, **kwargs):
    return generate_scene(seed, **kwargs)


@pytest.fixture(scope="session")
def scene():
    return cached_scene(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
