import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from combigcn.graph import WeightConfig, build_weighted_user_matrix, normalize_graphs  # noqa: E402
from combigcn.preprocess import InteractionDataset  # noqa: E402
from combigcn.sparse import CSRMatrix  # noqa: E402


def random_binary(rng, n, m, density=0.3, min_per_row=1):
    """Random 0/1 matrix where every row and column has at least ``min_per_row`` ones."""
    r = (rng.random((n, m)) < density).astype(float)
    for u in range(n):
        if r[u].sum() < min_per_row:
            r[u, rng.choice(m, size=min_per_row, replace=False)] = 1.0
    for i in range(m):
        if r[:, i].sum() == 0:
            r[rng.integers(n), i] = 1.0
    return r


def dataset_from_dense(r):
    u, i = np.nonzero(r)
    n, m = r.shape
    return InteractionDataset(u, i, tuple(f"u{k}" for k in range(n)), tuple(f"i{k}" for k in range(m)))


def random_dataset(rng, n=30, m=20):
    """Skewed random interactions so popularity and thresholds actually bite."""
    pop = rng.random(m) ** 2
    act = rng.random(n)
    r = (rng.random((n, m)) < np.outer(act, pop) * 2.5).astype(float)
    r[np.arange(n), rng.integers(m, size=n)] = 1.0
    for i in range(m):
        if r[:, i].sum() == 0:
            r[rng.integers(n), i] = 1.0
    return dataset_from_dense(r)


def random_graphs(rng, n, m, density=0.4, self_loops=False):
    r = CSRMatrix.from_dense(random_binary(rng, n, m, density))
    w = build_weighted_user_matrix(r, WeightConfig(drop_self_loops=not self_loops))
    return normalize_graphs(r, w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
