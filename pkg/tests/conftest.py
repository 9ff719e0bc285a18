import numpy as np
import pytest

from hypersparse.data import BlobSpec, SplitPlan, generate_blobs, split_dataset
from hypersparse.nn import Batch, ModelSpec, init_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_spec():
    return ModelSpec(input_dim=5, hidden_dims=(7, 6), num_classes=4)


@pytest.fixture
def small_batch(rng):
    return Batch(rng.normal(size=(8, 5)), rng.integers(0, 4, 8))


@pytest.fixture
def params64(small_spec):
    return init_params(small_spec, seed=3, dtype=np.float64)


@pytest.fixture(scope="session")
def tiny_splits():
    ds = generate_blobs(BlobSpec(dims=6, classes=3, samples_per_class=60, seed=5))
    return split_dataset(ds, SplitPlan(0.6, 0.2, 0.2, seed=1))
