"""BPR-MF and LightGCN expressed as special cases of the dual-graph model."""

from __future__ import annotations

import dataclasses
from typing import Literal

from .graph import (
    NormalizedGraphs,
    WeightConfig,
    build_interaction_matrix,
    build_weighted_user_matrix,
    normalize_graphs,
)
from .preprocess import InteractionDataset
from .sparse import CSRMatrix
from .trainer import TrainConfig

VARIANTS = ("combigcn", "lightgcn", "bprmf")
Variant = Literal["combigcn", "lightgcn", "bprmf"]


def build_variant(
    kind: Variant,
    train: InteractionDataset,
    cfg: TrainConfig,
    weight_cfg: WeightConfig = WeightConfig(),
) -> tuple[NormalizedGraphs, TrainConfig]:
    """Graphs and effective config for one model variant.

    ``lightgcn`` drops the user-user graph; ``bprmf`` additionally runs with
    zero propagation layers, so scores are plain inner products of the
    trainable embeddings.
    """
    if kind not in VARIANTS:
        raise ValueError(f"unknown variant {kind!r}; choose from {', '.join(VARIANTS)}")
    r = build_interaction_matrix(train)
    if kind == "combigcn":
        w = build_weighted_user_matrix(r, weight_cfg)
    else:
        w = CSRMatrix.empty(train.n_users, train.n_users)
    graphs = normalize_graphs(r, w)
    if kind == "bprmf":
        cfg = dataclasses.replace(cfg, layers=0)
    return graphs, cfg
