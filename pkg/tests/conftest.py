import numpy as np
import pytest

from procfair.data import Dataset, SyntheticConfig, generate_synthetic


@pytest.fixture(scope="session")
def synth65():
    """Full-scale biased synthetic dataset, shared read-only across tests."""
    return generate_synthetic(SyntheticConfig(p=0.65, n_points=20000, seed=1))


@pytest.fixture(scope="session")
def synth65_small():
    return generate_synthetic(SyntheticConfig(p=0.65, n_points=2000, seed=2))


@pytest.fixture()
def toy_pair_dataset():
    """1-D two-group dataset from the nearest-neighbor hand examples:
    group-1 rows at 0 and 10, group-2 rows at 1 and 9."""
    return Dataset(
        features=np.array([[0.0], [10.0], [1.0], [9.0]]),
        labels=np.array([1, 0, 1, 0]),
        group=np.array([1, 1, 0, 0]),
        feature_names=("f",),
        sensitive_col=None,
    )
