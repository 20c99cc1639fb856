"""Small synthetic interaction logs for tests and demos."""

from __future__ import annotations

import numpy as np

from .preprocess import InteractionDataset, ingest


def two_block_dataset(
    n_users: int = 40, n_items: int = 40, density: float = 0.8, seed: int = 0
) -> InteractionDataset:
    """Two user communities, each interacting only with its own half of the items.

    Each in-block pair is present with probability ``density``; every user
    keeps at least two interactions so a per-user split leaves something in
    train.
    """
    rng = np.random.default_rng(seed)
    half_u, half_i = n_users // 2, n_items // 2
    records = []
    for u in range(n_users):
        block = range(0, half_i) if u < half_u else range(half_i, n_items)
        chosen = [i for i in block if rng.random() < density]
        if len(chosen) < 2:
            chosen = sorted(rng.choice(list(block), size=2, replace=False).tolist())
        records.extend((f"u{u}", f"i{i}") for i in chosen)
    return ingest(records)
