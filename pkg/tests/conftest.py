import numpy as np
import pytest

from vkshell.fields import DIRICHLET, PERIODIC, Grid2D

TWO_PI = 2.0 * np.pi


@pytest.fixture
def torus64():
    return Grid2D(64, 64, (0.0, TWO_PI, 0.0, TWO_PI), bc=PERIODIC)


@pytest.fixture
def torus128():
    return Grid2D(128, 128, (0.0, TWO_PI, 0.0, TWO_PI), bc=PERIODIC)


@pytest.fixture
def square33():
    return Grid2D(33, 33, (0.0, 1.0, 0.0, 1.0), bc=DIRICHLET)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
