import numpy as np
import pytest

from margint.data import Dataset


def make_rng(seed=0):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@pytest.fixture
def rng():
    return make_rng(12345)


def uniform_dataset(n, d, seed=0, noise=0.0, fn=None, box=(0.0, 1.0)):
    """Simple complete-data testbed: Y = fn(X) + noise * N(0,1)."""
    g = make_rng(seed)
    lo, hi = box
    x = lo + (hi - lo) * g.random((n, d))
    y = np.zeros(n) if fn is None else np.asarray(fn(x), dtype=float)
    if noise:
        y = y + noise * g.standard_normal(n)
    return Dataset(x, y, np.ones(n, dtype=np.int64))
