import numpy as np
import pytest

from auranet.synthetic import write_synthetic_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tiny_dataset(tmp_path):
    """Six 64x64 synthetic cell samples in the expected directory layout."""
    root = tmp_path / "data"
    ids = write_synthetic_dataset(root, count=6, size=64, seed=0)
    return root, ids


def random_prob_pair(rng, shape=(8, 8), dtype=np.float64):
    """A soft prediction/reference pair with values away from the BCE
    clamp boundaries."""
    pred = rng.uniform(0.05, 0.95, size=shape).astype(dtype)
    gt = rng.uniform(0.0, 1.0, size=shape).astype(dtype)
    return pred, gt
