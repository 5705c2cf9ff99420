"""Shared pytest options and fixtures."""

import numpy as np
import pytest

from repligame.grid import build_grid


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-resolution reproduction tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_grid():
    # dt = 0.05, dx = 0.05
    return build_grid(200, 20, 10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
