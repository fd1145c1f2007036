import numpy as np
import pytest

from laat.geometry import PointCloud


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow protocol tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def plane_cloud():
    """300 points on a thin square sheet plus 100 uniform noise points in the unit cube"""
    gen = np.random.default_rng(7)
    sheet = np.column_stack([gen.random(300), gen.random(300), 0.5 + 0.01 * gen.random(300)])
    noise = gen.random((100, 3))
    return PointCloud(
        points=np.vstack([sheet, noise]),
        labels=np.concatenate([np.ones(300, dtype=int), np.zeros(100, dtype=int)]),
        attributes={'density': np.linspace(1.0, 2.0, 400)},
    )


@pytest.fixture
def chain_cloud():
    """Five points on a line, each seeing only its direct neighbors"""
    return PointCloud(points=np.column_stack([np.arange(5) * 0.1, np.zeros(5)]))


def brute_force_neighbors(points, radius):
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    return [np.flatnonzero(row <= radius) for row in dist]
