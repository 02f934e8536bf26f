import math
import os

import numpy as np
import pytest

from app.config import get_settings
from app.schemas.fields import FlowState, Grid
from app.services.initial_data import InitialDataServices
from app.services.spectral import SpectralServices


@pytest.fixture(autouse=True, scope="session")
def single_thread():
    previous = os.environ.get("MACHLAB_THREADS")
    os.environ["MACHLAB_THREADS"] = "1"
    get_settings.cache_clear()
    yield
    if previous is None:
        os.environ.pop("MACHLAB_THREADS", None)
    else:
        os.environ["MACHLAB_THREADS"] = previous
    get_settings.cache_clear()


@pytest.fixture
def grid32() -> Grid:
    return Grid(n=32, box_length=2 * math.pi * 4)


@pytest.fixture
def grid64() -> Grid:
    return Grid(n=64, box_length=2 * math.pi * 4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def random_field(rng):
    def make(grid: Grid, slope: float = 1.0):
        return InitialDataServices.random_scalar(grid, rng, rate=1.0, slope=slope)

    return make


@pytest.fixture
def random_vector(rng):
    def make(grid: Grid):
        return SpectralServices.from_physical(rng.standard_normal((2, grid.n, grid.n)), grid)

    return make


@pytest.fixture
def small_state(grid32):
    def make(eps: float = 0.1, spec: str = "taylor-green-ill", amplitude: float = 0.5) -> FlowState:
        return InitialDataServices.make_initial_data(spec, grid32, eps, amplitude, seed=7)

    return make
