"""Shared fixtures for the subopt test suite"""

import numpy as np
import pytest

from helper.models import Dataset, ErrorLevel, Scenario, ScenarioSpec
from helper.numerics import RngStream
from helper.simgen import gen_dataset


@pytest.fixture
def toy6():
    """x in {-1, 0, 1} duplicated, y = (0,0,0,1,1,1)"""
    x = np.array([-1.0, 0.0, 1.0, -1.0, 0.0, 1.0])
    X = np.column_stack([np.ones(6), x])
    y = np.array([0, 0, 0, 1, 1, 1])
    return Dataset(X=X, y=y)


@pytest.fixture
def rng():
    return RngStream(12345, 0)


@pytest.fixture
def small_cohort():
    """zeroMeanNormal, p=3, N=2000 with a low-error surrogate"""
    spec = ScenarioSpec.default(Scenario.ZERO_MEAN_NORMAL, p=3, N=2000,
                                error_level=ErrorLevel.LOW)
    return gen_dataset(spec, RngStream(2024, 0))


@pytest.fixture
def random_rows():
    """Generator for small random influence matrices"""
    generator = np.random.default_rng(7)

    def make(N: int, d: int = 2) -> np.ndarray:
        return generator.standard_t(3, size=(N, d))
    return make
