"""Shared builders for the test suite."""

import numpy as np
import pytest
from loguru import logger

from expertkm.modules.survival.service import SurvivalService


@pytest.fixture(autouse=True)
def quiet_logging():
    """Tests run without sinks; CLI tests install their own through the group."""
    logger.remove()
    yield
    logger.remove()


@pytest.fixture
def make_sample():
    """Build a sorted sample from parallel columns."""

    def build(w, delta, eta=None, x_true=None, y_true=None, c_true=None, direction="event-first"):
        observations = SurvivalService.build_observations(w, delta, eta=eta, x_true=x_true, y_true=y_true, c_true=c_true)
        return SurvivalService.sort_sample(observations, direction)

    return build


@pytest.fixture
def random_censored():
    """Tie-free right-censored samples: exponential sizes with exponential censoring."""

    def build(rng: np.random.Generator, n: int, censor_rate: float = 0.5):
        x = rng.exponential(1.0, n)
        c = rng.exponential(1.0 / censor_rate, n)
        w = np.minimum(x, c)
        delta = (x <= c).astype(int)
        return w, delta

    return build
