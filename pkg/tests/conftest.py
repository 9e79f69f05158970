import numpy as np
import pytest

from safenet.pipeline import Dataset


def make_dataset(n0: int, n1: int, d: int = 6, seed: int = 0, company: int = 1) -> Dataset:
    """Random continuous dataset with the given class counts."""
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n0 + n1, d))
    labels = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    perm = rng.permutation(n0 + n1)
    return Dataset(features[perm], labels[perm], np.full(n0 + n1, company))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
