"""Shared fixtures for the conc-lab test suite."""

import numpy as np
import pytest

from conc_lab.bootstrap import reset_settings
from conc_lab.measures import make_measure


@pytest.fixture(autouse=True)
def _fresh_settings():
    """Re-read CONC_LAB_* variables for every test (monkeypatched env included)."""
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def two_point():
    """Uniform measure on {0, 1}."""
    return make_measure([0.0, 1.0], [0.5, 0.5])


@pytest.fixture
def three_point():
    return make_measure([0.0, 1.0, 2.0], [1 / 3, 1 / 3, 1 / 3])


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
