"""Embeddings, dual-graph light propagation, layer averaging and scoring."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import NormalizedGraphs
from .preprocess import InputError
from .sparse import spmm


@dataclass(eq=False)
class EmbeddingTable:
    """Trainable parameters: one row per user and one row per item."""

    user_embed: np.ndarray
    item_embed: np.ndarray

    def __post_init__(self) -> None:
        self.user_embed = np.asarray(self.user_embed, dtype=np.float64)
        self.item_embed = np.asarray(self.item_embed, dtype=np.float64)
        if self.user_embed.ndim != 2 or self.item_embed.ndim != 2:
            raise ValueError("embeddings must be 2-d")
        if self.user_embed.shape[1] != self.item_embed.shape[1] or self.user_embed.shape[1] < 1:
            raise ValueError("user and item embeddings must share a positive dimension")

    @property
    def n_users(self) -> int:
        return self.user_embed.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_embed.shape[0]

    @property
    def dim(self) -> int:
        return self.user_embed.shape[1]

    def stacked(self) -> np.ndarray:
        return np.vstack([self.user_embed, self.item_embed])

    def copy(self) -> EmbeddingTable:
        return EmbeddingTable(self.user_embed.copy(), self.item_embed.copy())

    def squared_norm(self) -> float:
        return float(np.sum(self.user_embed**2) + np.sum(self.item_embed**2))


@dataclass
class PropagationTrace:
    layers: list[np.ndarray]
    final: np.ndarray
    alpha: float
    n_users: int

    @property
    def user_final(self) -> np.ndarray:
        return self.final[: self.n_users]

    @property
    def item_final(self) -> np.ndarray:
        return self.final[self.n_users :]


def init_embeddings(n: int, m: int, d: int, seed: int, std: float = 0.1) -> EmbeddingTable:
    if min(n, m, d) < 1:
        raise ValueError("n, m and d must all be >= 1")
    rng = np.random.default_rng(seed)
    return EmbeddingTable(rng.normal(0.0, std, size=(n, d)), rng.normal(0.0, std, size=(m, d)))


def apply_operator(g: NormalizedGraphs, e: np.ndarray) -> np.ndarray:
    """One propagation step on stacked embeddings ``[users; items]``.

    Users gather from their items and from similar users; items gather from
    their users only.
    """
    n, m = g.n_users, g.n_items
    if e.shape[0] != n + m:
        raise ValueError(f"embedding has {e.shape[0]} rows, graph expects {n + m}")
    users, items = e[:n], e[n:]
    new_users = spmm(g.r_norm, items) + spmm(g.w_norm, users)
    new_items = spmm(g.r_norm_t, users)
    return np.vstack([new_users, new_items])


def combine_layers(layers: Sequence[np.ndarray]) -> np.ndarray:
    """Uniform average of all layers, the initial one included."""
    if len(layers) == 0:
        raise ValueError("need at least one layer to combine")
    shape = layers[0].shape
    if any(layer.shape != shape for layer in layers):
        raise ValueError("all layers must share a shape")
    alpha = 1.0 / len(layers)
    total = np.zeros(shape)
    for layer in layers:
        total += layer
    return alpha * total


def propagate(phi: EmbeddingTable, g: NormalizedGraphs, n_layers: int) -> PropagationTrace:
    if n_layers < 0:
        raise ValueError("number of layers must be >= 0")
    if (phi.n_users, phi.n_items) != (g.n_users, g.n_items):
        raise ValueError(
            f"embeddings are ({phi.n_users}, {phi.n_items}) but graphs are ({g.n_users}, {g.n_items})"
        )
    layers = [phi.stacked()]
    for _ in range(n_layers):
        layers.append(apply_operator(g, layers[-1]))
    return PropagationTrace(layers, combine_layers(layers), 1.0 / (n_layers + 1), phi.n_users)


def predict_score(e_star: np.ndarray, u: int, i: int, n: int) -> float:
    if not 0 <= u < n:
        raise IndexError(f"user {u} out of range [0, {n})")
    if not 0 <= i < e_star.shape[0] - n:
        raise IndexError(f"item {i} out of range [0, {e_star.shape[0] - n})")
    return float(e_star[u] @ e_star[n + i])


def score_users(e_star: np.ndarray, users: Sequence[int], n: int) -> np.ndarray:
    """Scores of every item for each listed user, shape ``(len(users), m)``."""
    return e_star[np.asarray(users, dtype=np.int64)] @ e_star[n:].T


def rank_items(scores: np.ndarray, k: int, exclude=()) -> list[int]:
    """Top-``k`` item ids by descending score, ties to the smaller id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = np.ones(scores.shape[0], dtype=bool)
    excluded = np.asarray(list(exclude), dtype=np.int64)
    candidates[excluded] = False
    ids = np.flatnonzero(candidates)
    order = np.argsort(-scores[ids], kind="stable")
    return ids[order[:k]].tolist()


def recommend_topk(e_star: np.ndarray, u: int, k: int, exclude=(), *, n: int) -> list[int]:
    if not 0 <= u < n:
        raise IndexError(f"user {u} out of range [0, {n})")
    return rank_items(score_users(e_star, [u], n)[0], k, exclude)


# -- checkpoints -------------------------------------------------------------
#
# Layout (little-endian):
#   8 bytes   magic b"CGCNCKPT"
#   uint32    format version (1)
#   uint64    n, m, d
#   float64   user_embed, n*d values, row-major
#   float64   item_embed, m*d values, row-major
#   uint32    metadata length L (may be 0)
#   L bytes   UTF-8 JSON metadata (effective run config)

MAGIC = b"CGCNCKPT"
VERSION = 1
_HEADER = struct.Struct("<8sIQQQ")


def save_checkpoint(phi: EmbeddingTable, path, metadata: dict | None = None) -> None:
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, phi.n_users, phi.n_items, phi.dim))
        fh.write(np.ascontiguousarray(phi.user_embed, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(phi.item_embed, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)


def load_checkpoint(path) -> tuple[EmbeddingTable, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise InputError("bad checkpoint header")
    magic, version, n, m, d = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise InputError("bad checkpoint header")
    if version != VERSION:
        raise InputError(f"unsupported checkpoint version {version}")
    offset = _HEADER.size
    body = (n + m) * d * 8
    if len(blob) < offset + body + 4:
        raise InputError("truncated checkpoint")
    floats = np.frombuffer(blob, dtype="<f8", count=(n + m) * d, offset=offset).astype(np.float64)
    offset += body
    (meta_len,) = struct.unpack_from("<I", blob, offset)
    meta = json.loads(blob[offset + 4 : offset + 4 + meta_len].decode("utf-8")) if meta_len else {}
    phi = EmbeddingTable(floats[: n * d].reshape(n, d), floats[n * d :].reshape(m, d))
    return phi, meta
