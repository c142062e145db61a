import numpy as np
import pytest

from manyiv.core.projections import ProjectionBundle
from manyiv.models.dataset import Dataset


def make_dataset(n: int, k: int, seed: int, k_w: int = 0, beta: float = 1.0) -> Dataset:
    """Random IV dataset; controls (if any) are an intercept plus Gaussian columns."""
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, k))
    W = None
    if k_w:
        W = np.hstack([np.ones((n, 1)), rng.normal(size=(n, k_w - 1))])
    v = rng.normal(size=n)
    x = Z @ np.full(k, 0.8) + v
    y = beta * x + 0.5 * v + rng.normal(size=n)
    return Dataset.from_arrays(y, x, Z, W)


def make_groups(n_groups: int, size: int, seed: int, strength: float = 1.0) -> Dataset:
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_groups), size)
    Z = np.zeros((n_groups * size, n_groups))
    Z[np.arange(labels.size), labels] = 1.0
    v = rng.normal(size=labels.size)
    x = strength * rng.normal(size=n_groups)[labels] + v
    y = x + 0.3 * v + rng.normal(size=labels.size)
    return Dataset(y=y, x=x, Z=Z, W=np.zeros((labels.size, 0)), group_labels=labels)


@pytest.fixture
def pair_dataset() -> Dataset:
    """Constant instrument, N = 2: P = [[.5, .5], [.5, .5]]."""
    return Dataset.from_arrays(np.array([2.0, 4.0]), np.array([1.0, 2.0]), np.ones((2, 1)))


@pytest.fixture
def pair_bundle(pair_dataset: Dataset) -> ProjectionBundle:
    return ProjectionBundle.build(pair_dataset)


@pytest.fixture
def unit_control_dataset() -> Dataset:
    """N = 4, W = intercept, Z = first unit vector."""
    Z = np.array([[1.0], [0.0], [0.0], [0.0]])
    return Dataset.from_arrays(
        np.array([1.0, 2.0, 0.0, 3.0]), np.array([2.0, 1.0, 1.0, 0.0]), Z, np.ones((4, 1))
    )


@pytest.fixture
def random_dataset() -> Dataset:
    return make_dataset(16, 3, seed=11)


@pytest.fixture
def controls_dataset() -> Dataset:
    return make_dataset(40, 4, seed=5, k_w=3)


@pytest.fixture
def group_dataset() -> Dataset:
    return make_groups(40, 5, seed=3)
