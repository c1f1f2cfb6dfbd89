import numpy as np
import pytest

from issm.datagen import SyntheticSpec, generate, generate_holdout, split_pools


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_spec():
    return SyntheticSpec(class_count=3, samples_per_class=30, joints=3, dims=3, frames=8,
                         class_separation=1.0, noise_sigma=1.0, seed=5)


@pytest.fixture(scope="session")
def small_dataset(small_spec):
    return generate(small_spec)


@pytest.fixture(scope="session")
def small_holdout(small_spec):
    return generate_holdout(small_spec, 10)


@pytest.fixture
def small_pools(small_dataset):
    return split_pools(small_dataset, 9, 12, seed=0)
