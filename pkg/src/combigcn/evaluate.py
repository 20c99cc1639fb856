"""Top-K ranking metrics averaged over test users."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import rank_items, score_users
from .preprocess import InteractionDataset


@dataclass(frozen=True)
class MetricsReport:
    k: int
    precision: float
    recall: float
    ndcg: float
    n_evaluated_users: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "precision": self.precision,
                "recall": self.recall,
                "ndcg": self.ndcg,
                "users": self.n_evaluated_users,
            }
        )

    def as_dict(self) -> dict:
        return asdict(self)


def metrics_for_user(recommended, relevant, k: int) -> tuple[float, float, float]:
    """Precision, recall and NDCG of one ranked list against one relevant set.

    Precision always divides by ``k``, even if fewer than ``k`` items were
    recommendable.
    """
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set is empty; filter such users out before scoring")
    top = list(recommended)[:k]
    hit_positions = [p for p, item in enumerate(top) if item in relevant]
    hits = len(hit_positions)
    dcg = sum(1.0 / math.log2(p + 2) for p in hit_positions)
    idcg = sum(1.0 / math.log2(p + 2) for p in range(min(k, len(relevant))))
    return hits / k, hits / len(relevant), dcg / idcg


def evaluate(
    e_star: np.ndarray,
    train: InteractionDataset,
    test: InteractionDataset,
    k: int,
    chunk: int = 1024,
) -> MetricsReport:
    n = train.n_users
    train_items = train.items_by_user()
    test_items = test.items_by_user()
    users = [u for u in range(test.n_users) if len(test_items[u])]
    if not users:
        raise ValueError("no user has test interactions")

    precisions, recalls, ndcgs = [], [], []
    for start in range(0, len(users), chunk):
        block = users[start : start + chunk]
        scores = score_users(e_star, block, n)
        for row, u in zip(scores, block):
            ranked = rank_items(row, k, exclude=train_items[u])
            p, r, g = metrics_for_user(ranked, test_items[u].tolist(), k)
            precisions.append(p)
            recalls.append(r)
            ndcgs.append(g)

    count = len(users)
    # fsum is exactly rounded, so the mean does not depend on summation order
    return MetricsReport(
        k=k,
        precision=math.fsum(precisions) / count,
        recall=math.fsum(recalls) / count,
        ndcg=math.fsum(ndcgs) / count,
        n_evaluated_users=count,
    )
