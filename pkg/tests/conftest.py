import numpy as np
import pytest

from mfg_uzawa import EllipticOperator, Field, RunningCost, TorusGrid


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid4():
    return TorusGrid(4)


@pytest.fixture
def grid8():
    return TorusGrid(8)


@pytest.fixture
def op4(grid4):
    return EllipticOperator(nu=1.0, lam=1.0, grid=grid4)


@pytest.fixture
def op8(grid8):
    return EllipticOperator(nu=0.02, lam=1.0, grid=grid8)


def paper_f0_stop(grid):
    return Field.from_function(
        grid,
        lambda x, y: np.cos(2 * np.pi * x) + 2 * np.cos(2 * np.pi * (y - x)) + np.cos(6 * np.pi * x),
    )


def paper_f0_continuous(grid):
    return Field.from_function(
        grid,
        lambda x, y: np.cos(2 * np.pi * x) + np.cos(2 * np.pi * y) + np.cos(4 * np.pi * x),
    )


@pytest.fixture
def cost8(grid8):
    return RunningCost(f0=paper_f0_stop(grid8))


def random_field(grid, rng, scale=1.0):
    return Field(grid, scale * rng.standard_normal((grid.d, grid.d)))


def smooth_field(grid, rng, scale=1.0, modes=2):
    x, y = grid.nodes()
    vals = np.zeros((grid.d, grid.d))
    for k in range(1, modes + 1):
        a, b, c, e = rng.standard_normal(4)
        vals += (
            a * np.cos(2 * np.pi * k * x)
            + b * np.sin(2 * np.pi * k * y)
            + c * np.sin(2 * np.pi * k * (x + y)) * 0.5
            + e * np.cos(2 * np.pi * k * (x - y)) * 0.5
        )
    return Field(grid, scale * vals)
