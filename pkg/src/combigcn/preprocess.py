"""Interaction logs: ingestion, popularity-core reduction and train/test split."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class InputError(ValueError):
    """Bad user-supplied input (malformed file, impossible config)."""


@dataclass(frozen=True, eq=False)
class InteractionDataset:
    """Binary user-item interactions over dense integer ids.

    ``users``/``items`` hold one entry per interaction, sorted by (user, item)
    with no duplicates.  ``user_keys[u]`` / ``item_keys[i]`` give the original
    string keys.  Datasets produced by :func:`split` share their parent's key
    maps, so some ids may have no interactions there.
    """

    users: np.ndarray
    items: np.ndarray
    user_keys: tuple[str, ...]
    item_keys: tuple[str, ...]
    _user_index: dict = field(init=False, repr=False, compare=False)
    _item_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        users = np.asarray(self.users, dtype=np.int64)
        items = np.asarray(self.items, dtype=np.int64)
        if users.shape != items.shape or users.ndim != 1:
            raise ValueError("users and items must be 1-d arrays of equal length")
        order = np.lexsort((items, users))
        users, items = users[order], items[order]
        if users.size:
            if users.min() < 0 or users.max() >= len(self.user_keys):
                raise ValueError("user id out of range")
            if items.min() < 0 or items.max() >= len(self.item_keys):
                raise ValueError("item id out of range")
            dup = (users[1:] == users[:-1]) & (items[1:] == items[:-1])
            if dup.any():
                raise ValueError("duplicate (user, item) pairs")
        users.flags.writeable = False
        items.flags.writeable = False
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "user_keys", tuple(self.user_keys))
        object.__setattr__(self, "item_keys", tuple(self.item_keys))
        object.__setattr__(self, "_user_index", {k: i for i, k in enumerate(self.user_keys)})
        object.__setattr__(self, "_item_index", {k: i for i, k in enumerate(self.item_keys)})

    @property
    def n_users(self) -> int:
        return len(self.user_keys)

    @property
    def n_items(self) -> int:
        return len(self.item_keys)

    @property
    def n_interactions(self) -> int:
        return int(self.users.size)

    def user_id(self, key: str) -> int:
        return self._user_index[key]

    def item_id(self, key: str) -> int:
        return self._item_index[key]

    def has_user(self, key: str) -> bool:
        return key in self._user_index

    def has_item(self, key: str) -> bool:
        return key in self._item_index

    def pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.users.tolist(), self.items.tolist()))

    def key_pairs(self) -> set[tuple[str, str]]:
        return {(self.user_keys[u], self.item_keys[i]) for u, i in self.pairs()}

    def user_degrees(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n_users)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.items, minlength=self.n_items)

    def items_by_user(self) -> list[np.ndarray]:
        """Item ids of each user, ascending."""
        bounds = np.searchsorted(self.users, np.arange(self.n_users + 1))
        return [self.items[bounds[u] : bounds[u + 1]] for u in range(self.n_users)]

    def with_pairs(self, users, items) -> InteractionDataset:
        """Same key maps, different interaction set."""
        return InteractionDataset(users, items, self.user_keys, self.item_keys)

    def stats(self) -> dict:
        n, m, k = self.n_users, self.n_items, self.n_interactions
        return {"n": n, "m": m, "interactions": k, "density": k / (n * m) if n and m else 0.0}


@dataclass(frozen=True)
class PreprocessConfig:
    core_item_count: int
    user_item_ratio: float
    min_user_interactions: int = 10

    def __post_init__(self) -> None:
        if self.core_item_count < 1:
            raise ValueError("core_item_count must be >= 1")
        if not self.user_item_ratio > 0:
            raise ValueError("user_item_ratio must be > 0")
        if self.min_user_interactions < 1:
            raise ValueError("min_user_interactions must be >= 1")


def ingest(records: Iterable[tuple[str, str]]) -> InteractionDataset:
    """Map string keys to dense ids in first-appearance order, dropping duplicates."""
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    for user_key, item_key in records:
        u = user_index.setdefault(user_key, len(user_index))
        i = item_index.setdefault(item_key, len(item_index))
        seen.add((u, i))
    if not seen:
        raise InputError("interaction log is empty")
    pairs = np.array(sorted(seen), dtype=np.int64)
    return InteractionDataset(pairs[:, 0], pairs[:, 1], tuple(user_index), tuple(item_index))


def read_tsv(path) -> list[tuple[str, str]]:
    """Parse ``user<TAB>item`` lines; ``#`` comments and blank lines are skipped."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise InputError(f"{path}: line {lineno}: expected 'user<TAB>item', got {line!r}")
            records.append((fields[0], fields[1]))
    return records


def write_tsv(ds: InteractionDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i in zip(ds.users.tolist(), ds.items.tolist()):
            fh.write(f"{ds.user_keys[u]}\t{ds.item_keys[i]}\n")


def write_stats(ds: InteractionDataset, path, extra: dict | None = None) -> None:
    payload = ds.stats()
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def select_core_items(ds: InteractionDataset, count: int) -> np.ndarray:
    """Ids of the ``count`` most-interacted items, ties to the smaller id, ascending."""
    if not 1 <= count <= ds.n_items:
        raise ValueError(f"core item count must be in [1, {ds.n_items}], got {count}")
    deg = ds.item_degrees()
    order = np.lexsort((np.arange(ds.n_items), -deg))
    return np.sort(order[:count])


def score_users(ds: InteractionDataset, core: Sequence[int]) -> np.ndarray:
    """Jaccard similarity between each user's item set and ``core``."""
    core = np.unique(np.asarray(core, dtype=np.int64))
    if core.size == 0:
        raise ValueError("core item set is empty")
    in_core = np.zeros(ds.n_items, dtype=bool)
    in_core[core] = True
    inter = np.bincount(ds.users[in_core[ds.items]], minlength=ds.n_users)
    union = ds.user_degrees() + core.size - inter
    return inter / union


def target_user_count(core_item_count: int, ratio: float) -> int:
    # half-up rounding
    return int(math.floor(core_item_count * ratio + 0.5))


def reduce(ds: InteractionDataset, cfg: PreprocessConfig) -> InteractionDataset:
    """Shrink ``ds`` to popular core items and the users most aligned with them.

    Steps: take the ``core_item_count`` most popular items; rank users by
    Jaccard similarity to that core and keep the top ``round(count * ratio)``;
    drop interactions outside the core; keep users with strictly more than
    ``min_user_interactions`` remaining interactions; keep items still touched.
    Survivors are re-numbered in ascending order of their old ids.
    """
    core = select_core_items(ds, cfg.core_item_count)
    n_target = min(target_user_count(cfg.core_item_count, cfg.user_item_ratio), ds.n_users)
    sim = score_users(ds, core)
    candidates = np.lexsort((np.arange(ds.n_users), -sim))[:n_target]

    in_core = np.zeros(ds.n_items, dtype=bool)
    in_core[core] = True
    is_candidate = np.zeros(ds.n_users, dtype=bool)
    is_candidate[candidates] = True
    keep = in_core[ds.items] & is_candidate[ds.users]
    users, items = ds.users[keep], ds.items[keep]

    counts = np.bincount(users, minlength=ds.n_users)
    survivors = counts > cfg.min_user_interactions
    keep = survivors[users]
    users, items = users[keep], items[keep]
    if users.size == 0:
        raise InputError(
            f"no user has more than {cfg.min_user_interactions} interactions with the "
            f"{core.size} core items; raise core_item_count or lower min_user_interactions"
        )

    kept_users = np.unique(users)
    kept_items = np.unique(items)
    return InteractionDataset(
        np.searchsorted(kept_users, users),
        np.searchsorted(kept_items, items),
        tuple(ds.user_keys[u] for u in kept_users),
        tuple(ds.item_keys[i] for i in kept_items),
    )


def split(
    ds: InteractionDataset, train_fraction: float, seed: int
) -> tuple[InteractionDataset, InteractionDataset]:
    """Per-user random split; ``ceil(fraction * degree)`` interactions go to train."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train_mask = np.zeros(ds.n_interactions, dtype=bool)
    bounds = np.searchsorted(ds.users, np.arange(ds.n_users + 1))
    for u in range(ds.n_users):
        lo, hi = bounds[u], bounds[u + 1]
        count = hi - lo
        if count == 0:
            continue
        # guard against e.g. 0.7 * 10 = 7.000000000000001
        n_train = math.ceil(train_fraction * count - 1e-9)
        perm = rng.permutation(count)
        train_mask[lo + perm[:n_train]] = True
    train = ds.with_pairs(ds.users[train_mask], ds.items[train_mask])
    test = ds.with_pairs(ds.users[~train_mask], ds.items[~train_mask])
    return train, test


def align(ds: InteractionDataset, records: Iterable[tuple[str, str]]) -> tuple[InteractionDataset, int]:
    """Map ``records`` through ``ds``'s key maps.

    Returns the mapped dataset and the number of records dropped because their
    user or item key is unknown to ``ds``.
    """
    pairs = set()
    dropped = 0
    for user_key, item_key in records:
        if ds.has_user(user_key) and ds.has_item(item_key):
            pairs.add((ds.user_id(user_key), ds.item_id(item_key)))
        else:
            dropped += 1
    arr = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return ds.with_pairs(arr[:, 0], arr[:, 1]), dropped
