"""Interaction matrix, Jaccard user-user weights, and the normalized propagation graphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .preprocess import InteractionDataset
from .sparse import CSRMatrix, gram, sym_normalize, transpose


@dataclass(frozen=True)
class WeightConfig:
    quantization_bins: int = 10
    drop_self_loops: bool = True

    def __post_init__(self) -> None:
        if self.quantization_bins < 1:
            raise ValueError("quantization_bins must be >= 1")


@dataclass(frozen=True, eq=False)
class NormalizedGraphs:
    r_norm: CSRMatrix    # n x m
    r_norm_t: CSRMatrix  # m x n
    w_norm: CSRMatrix    # n x n

    @property
    def n_users(self) -> int:
        return self.r_norm.n_rows

    @property
    def n_items(self) -> int:
        return self.r_norm.n_cols

    def operator_dense(self) -> np.ndarray:
        """The full (n+m) x (n+m) propagation operator as a dense array. Small graphs only."""
        n, m = self.n_users, self.n_items
        a = np.zeros((n + m, n + m))
        a[:n, :n] = self.w_norm.to_dense()
        a[:n, n:] = self.r_norm.to_dense()
        a[n:, :n] = self.r_norm_t.to_dense()
        return a


def build_interaction_matrix(train: InteractionDataset) -> CSRMatrix:
    if train.n_interactions == 0:
        raise ValueError("cannot build an interaction matrix from an empty dataset")
    return CSRMatrix.from_coo(
        train.users, train.items, np.ones(train.n_interactions), (train.n_users, train.n_items)
    )


def quantize_weight(v, bins: int):
    """Round similarities up to the next multiple of ``1 / bins``.

    Works on scalars and arrays.  The result is the smallest ``k / bins``
    (k = 1..bins) that is >= v, so exact grid points map to themselves even
    when ``v * bins`` picks up rounding error.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    arr = np.asarray(v, dtype=np.float64)
    if np.any(~(arr > 0.0)) or np.any(arr > 1.0):
        raise ValueError("weights to quantize must lie in (0, 1]")
    k = np.ceil(arr * bins)
    k = k - (((k - 1) / bins) >= arr)
    k = np.clip(k, 1, bins)
    out = k / bins
    return float(out) if np.ndim(v) == 0 else out


def jaccard_user_matrix(r: CSRMatrix, drop_self_loops: bool = False) -> CSRMatrix:
    """Jaccard similarity between every pair of users' item sets.

    ``intersection / (deg_i + deg_j - intersection)`` evaluated only on the
    sparsity pattern of ``R R^T``.
    """
    if not r.is_binary():
        raise ValueError("user similarity requires a binary interaction matrix")
    wu = gram(r)
    deg = np.diff(r.row_ptr).astype(np.float64)
    rows = wu.row_indices()
    cols = wu.col_idx
    union = deg[rows] + deg[cols] - wu.values
    values = wu.values / union
    keep = values > 0
    if drop_self_loops:
        keep &= rows != cols
    return CSRMatrix.from_coo(rows[keep], cols[keep], values[keep], wu.shape)


def build_weighted_user_matrix(r: CSRMatrix, cfg: WeightConfig = WeightConfig()) -> CSRMatrix:
    w = jaccard_user_matrix(r, drop_self_loops=cfg.drop_self_loops)
    if w.nnz == 0:
        return w
    return CSRMatrix(w.n_rows, w.n_cols, w.row_ptr, w.col_idx, quantize_weight(w.values, cfg.quantization_bins))


def normalize_graphs(r: CSRMatrix, w: CSRMatrix) -> NormalizedGraphs:
    n, m = r.shape
    if w.shape != (n, n):
        raise ValueError(f"user matrix has shape {w.shape}, expected ({n}, {n})")
    user_deg = np.diff(r.row_ptr).astype(np.float64)
    item_deg = np.bincount(r.col_idx, weights=r.values, minlength=m)
    w_deg = np.bincount(w.row_indices(), weights=w.values, minlength=n)
    r_norm = sym_normalize(r, user_deg, item_deg)
    return NormalizedGraphs(
        r_norm=r_norm,
        r_norm_t=transpose(r_norm),
        w_norm=sym_normalize(w, w_deg, w_deg),
    )


def build_graphs(train: InteractionDataset, cfg: WeightConfig = WeightConfig()) -> NormalizedGraphs:
    r = build_interaction_matrix(train)
    return normalize_graphs(r, build_weighted_user_matrix(r, cfg))


def write_edge_list(w: CSRMatrix, user_keys, path) -> None:
    """Dump a user-user matrix as ``user_i<TAB>user_j<TAB>weight`` lines."""
    rows = w.row_indices().tolist()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, j, v in zip(rows, w.col_idx.tolist(), w.values.tolist()):
            fh.write(f"{user_keys[i]}\t{user_keys[j]}\t{v!r}\n")
