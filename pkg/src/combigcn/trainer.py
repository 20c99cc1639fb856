"""BPR training with hand-derived gradients and Adam."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import expit

from .evaluate import MetricsReport, evaluate
from .graph import NormalizedGraphs
from .model import EmbeddingTable, PropagationTrace, apply_operator, init_embeddings, propagate
from .preprocess import InteractionDataset


class TrainTriple(NamedTuple):
    u: int
    i_pos: int
    i_neg: int


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    l2_lambda: float = 1e-5
    layers: int = 3
    dim: int = 64
    batch_size: int = 2048
    eval_k: int = 20
    patience_epochs: int = 50
    max_epochs: int = 1000
    seed: int = 2024

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        for name in ("dim", "batch_size", "eval_k", "patience_epochs", "max_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.patience_epochs >= self.max_epochs:
            raise ValueError("patience_epochs must be smaller than max_epochs")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, phi: EmbeddingTable) -> AdamState:
        shape = (phi.n_users + phi.n_items, phi.dim)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    recall: float
    precision: float
    ndcg: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


# -- sampling ----------------------------------------------------------------


def sample_epoch(train: InteractionDataset, rng_seed: int) -> np.ndarray:
    """One ``(user, positive, negative)`` row per training interaction.

    Negatives are uniform over all items, redrawn until they fall outside the
    user's training set.
    """
    m = train.n_items
    deg = train.user_degrees()
    if np.any(deg >= m):
        full = int(np.flatnonzero(deg >= m)[0])
        raise ValueError(f"user {train.user_keys[full]!r} interacted with every item; no negative exists")
    rng = np.random.default_rng(rng_seed)
    users, pos = train.users, train.items
    observed = np.sort(users * m + pos)
    neg = rng.integers(0, m, size=users.size)
    todo = np.flatnonzero(np.isin(users * m + neg, observed, assume_unique=False))
    while todo.size:
        neg[todo] = rng.integers(0, m, size=todo.size)
        clash = np.isin(users[todo] * m + neg[todo], observed)
        todo = todo[clash]
    return np.column_stack([users, pos, neg])


# -- loss and gradients --------------------------------------------------------


def _as_triples(batch) -> np.ndarray:
    arr = np.asarray(batch, dtype=np.int64)
    return arr.reshape(-1, 3)


def neg_log_sigmoid(x):
    """``-ln(sigmoid(x))`` without overflow."""
    return np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def bpr_loss(pos_scores, neg_scores, phi: EmbeddingTable, l2_lambda: float) -> float:
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.shape != neg.shape:
        raise ValueError("positive and negative score arrays differ in length")
    return float(np.sum(neg_log_sigmoid(pos - neg)) + l2_lambda * phi.squared_norm())


def triple_scores(trace: PropagationTrace, batch) -> tuple[np.ndarray, np.ndarray]:
    t = _as_triples(batch)
    users = trace.user_final[t[:, 0]]
    items = trace.item_final
    return np.sum(users * items[t[:, 1]], axis=1), np.sum(users * items[t[:, 2]], axis=1)


def batch_loss(batch, phi: EmbeddingTable, g: NormalizedGraphs, n_layers: int, l2_lambda: float) -> float:
    """Forward pass plus BPR loss for one batch."""
    trace = propagate(phi, g, n_layers)
    pos, neg = triple_scores(trace, batch)
    return bpr_loss(pos, neg, phi, l2_lambda)


def backward(
    batch, trace: PropagationTrace, g: NormalizedGraphs, phi: EmbeddingTable, l2_lambda: float
) -> EmbeddingTable:
    """Gradient of the batch BPR loss with respect to the initial embeddings.

    The final embedding is ``sum_l alpha * A^l E0`` for the symmetric
    propagation operator ``A``, so the gradient on ``E0`` is the same average
    of powers of ``A`` applied to the gradient on the final embedding.
    """
    n = phi.n_users
    if trace.final.shape != (phi.n_users + phi.n_items, phi.dim):
        raise ValueError(
            f"trace has shape {trace.final.shape}, parameters are "
            f"{(phi.n_users + phi.n_items, phi.dim)}"
        )
    t = _as_triples(batch)
    e = trace.final
    grad_final = np.zeros_like(e)
    if t.shape[0]:
        u, i, j = t[:, 0], n + t[:, 1], n + t[:, 2]
        eu, ei, ej = e[u], e[i], e[j]
        margin = np.sum(eu * (ei - ej), axis=1)
        # d/dx of -ln sigmoid(x) is -sigmoid(-x)
        coef = -expit(-margin)[:, None]
        np.add.at(grad_final, u, coef * (ei - ej))
        np.add.at(grad_final, i, coef * eu)
        np.add.at(grad_final, j, -coef * eu)

    n_layers = len(trace.layers) - 1
    total = grad_final.copy()
    current = grad_final
    for _ in range(n_layers):
        current = apply_operator(g, current)
        total += current
    grad0 = trace.alpha * total
    grad0 += 2.0 * l2_lambda * phi.stacked()
    return EmbeddingTable(grad0[:n], grad0[n:])


def adam_step(phi: EmbeddingTable, grads: EmbeddingTable, state: AdamState, lr: float):
    """In-place Adam update with bias correction; returns ``(phi, state)``."""
    g = grads.stacked()
    if g.shape != state.first_moment.shape:
        raise ValueError(f"gradient shape {g.shape} does not match optimizer state {state.first_moment.shape}")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient; training diverged")
    state.step_count += 1
    state.first_moment *= state.beta1
    state.first_moment += (1.0 - state.beta1) * g
    state.second_moment *= state.beta2
    state.second_moment += (1.0 - state.beta2) * (g * g)
    m_hat = state.first_moment / (1.0 - state.beta1**state.step_count)
    v_hat = state.second_moment / (1.0 - state.beta2**state.step_count)
    update = lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    n = phi.n_users
    phi.user_embed -= update[:n]
    phi.item_embed -= update[n:]
    return phi, state


# -- training loop -------------------------------------------------------------


Evaluator = Callable[[np.ndarray], MetricsReport]


def _check_no_leakage(train: InteractionDataset, test: InteractionDataset, g: NormalizedGraphs) -> None:
    if (g.n_users, g.n_items) != (train.n_users, train.n_items):
        raise ValueError("graphs do not match the training dataset's dimensions")
    if test.n_interactions == 0:
        return
    m = g.n_items
    graph_keys = g.r_norm.row_indices() * m + g.r_norm.col_idx
    if np.isin(test.users * m + test.items, graph_keys).any():
        raise ValueError("test interactions found in the training graph")


def train(
    train_ds: InteractionDataset,
    test_ds: InteractionDataset,
    g: NormalizedGraphs,
    cfg: TrainConfig,
    evaluator: Evaluator | None = None,
    progress: Callable[[str], None] | None = None,
) -> tuple[EmbeddingTable, TrainHistory]:
    """Train until recall@K on the held-out set stalls for ``patience_epochs`` epochs.

    ``evaluator`` maps the final embedding matrix to a :class:`MetricsReport`;
    by default it ranks ``test_ds`` with training items excluded.  Returns the
    parameters from the best epoch.
    """
    _check_no_leakage(train_ds, test_ds, g)
    if evaluator is None:
        def evaluator(e_star):
            return evaluate(e_star, train_ds, test_ds, cfg.eval_k)

    phi = init_embeddings(train_ds.n_users, train_ds.n_items, cfg.dim, cfg.seed)
    state = AdamState.zeros_like(phi)
    rng = np.random.default_rng(cfg.seed)
    history = TrainHistory()
    best_recall = -np.inf
    best_phi = phi.copy()
    k = cfg.eval_k

    for epoch in range(1, cfg.max_epochs + 1):
        triples = sample_epoch(train_ds, int(rng.integers(2**63)))
        triples = triples[rng.permutation(triples.shape[0])]
        total_loss = 0.0
        for start in range(0, triples.shape[0], cfg.batch_size):
            batch = triples[start : start + cfg.batch_size]
            trace = propagate(phi, g, cfg.layers)
            pos, neg = triple_scores(trace, batch)
            total_loss += bpr_loss(pos, neg, phi, cfg.l2_lambda)
            grads = backward(batch, trace, g, phi, cfg.l2_lambda)
            adam_step(phi, grads, state, cfg.learning_rate)
        mean_loss = total_loss / max(triples.shape[0], 1)

        report = evaluator(propagate(phi, g, cfg.layers).final)
        history.records.append(EpochRecord(epoch, mean_loss, report.recall, report.precision, report.ndcg))
        if report.recall > best_recall:
            best_recall = report.recall
            history.best_epoch = epoch
            best_phi = phi.copy()
        if progress is not None:
            progress(
                f"epoch={epoch} loss={mean_loss:.6f} recall@{k}={report.recall:.6f} "
                f"precision@{k}={report.precision:.6f} ndcg@{k}={report.ndcg:.6f} best={history.best_epoch}"
            )
        if epoch - history.best_epoch >= cfg.patience_epochs:
            history.stopped_early = epoch < cfg.max_epochs
            break

    return best_phi, history
