"""Independent brute-force reference implementations used by the tests.

Everything here is deliberately naive (Python loops, dense arrays, plain sets)
and shares no code path with the package beyond its public data types.
"""

from __future__ import annotations

import math

import numpy as np


def dense_matmul(a, x):
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    n, k = a.shape
    _, d = x.shape
    out = np.zeros((n, d))
    for i in range(n):
        for j in range(d):
            s = 0.0
            for t in range(k):
                s += a[i, t] * x[t, j]
            out[i, j] = s
    return out


def row_sets(r_dense) -> list[set[int]]:
    return [set(np.flatnonzero(row).tolist()) for row in np.asarray(r_dense)]


def intersection_counts(r_dense) -> np.ndarray:
    sets = row_sets(r_dense)
    n = len(sets)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = len(sets[i] & sets[j])
    return out


def jaccard_matrix(r_dense, keep_diagonal: bool = True) -> np.ndarray:
    sets = row_sets(r_dense)
    n = len(sets)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j and not keep_diagonal:
                continue
            union = sets[i] | sets[j]
            if union:
                out[i, j] = len(sets[i] & sets[j]) / len(union)
    return out


def block_operator(r_norm_dense, w_norm_dense) -> np.ndarray:
    r = np.asarray(r_norm_dense)
    w = np.asarray(w_norm_dense)
    n, m = r.shape
    a = np.zeros((n + m, n + m))
    a[:n, :n] = w
    a[:n, n:] = r
    a[n:, :n] = r.T
    return a


def dense_propagation(a, e0, n_layers):
    layers = [np.array(e0, dtype=float)]
    for _ in range(n_layers):
        layers.append(a @ layers[-1])
    return layers, sum(layers) / (n_layers + 1)


def full_loss(e0_flat, shape, a, n_layers, triples, n_users, lam):
    """BPR loss evaluated densely from scratch; used for finite differences."""
    e0 = e0_flat.reshape(shape)
    _, final = dense_propagation(a, e0, n_layers)
    total = 0.0
    for u, i, j in triples:
        x = final[u] @ final[n_users + i] - final[u] @ final[n_users + j]
        total += math.log1p(math.exp(-x)) if x > -30 else -x
    return total + lam * float(np.sum(e0 * e0))


def finite_difference_grad(f, x, step=1e-5):
    grad = np.zeros_like(x)
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += step
        xm[k] -= step
        grad[k] = (f(xp) - f(xm)) / (2 * step)
    return grad


def stored_backprop(a, e0, n_layers, triples, n_users, lam):
    """Layer-by-layer reverse pass through explicit ``a.T``; no symmetry assumed."""
    layers, final = dense_propagation(a, e0, n_layers)
    alpha = 1.0 / (n_layers + 1)
    g_final = np.zeros_like(final)
    for u, i, j in triples:
        x = final[u] @ (final[n_users + i] - final[n_users + j])
        c = -1.0 / (1.0 + math.exp(x))
        g_final[u] += c * (final[n_users + i] - final[n_users + j])
        g_final[n_users + i] += c * final[u]
        g_final[n_users + j] -= c * final[u]
    g_layer = alpha * g_final
    for _ in range(n_layers):
        g_layer = a.T @ g_layer + alpha * g_final
    return g_layer + 2 * lam * e0


def core_reduction(pairs, n_users, n_items, core_count, ratio, threshold):
    """Straight-line popularity-core reduction on (user, item) id pairs.

    Returns the surviving (user, item) pairs in the ORIGINAL id space.
    """
    users_of = {i: set() for i in range(n_items)}
    items_of = {u: set() for u in range(n_users)}
    for u, i in pairs:
        users_of[i].add(u)
        items_of[u].add(i)

    by_popularity = sorted(range(n_items), key=lambda i: (-len(users_of[i]), i))
    core = set(by_popularity[:core_count])

    n_target = int(math.floor(core_count * ratio + 0.5))
    sim = {}
    for u in range(n_users):
        inter = len(items_of[u] & core)
        union = len(items_of[u] | core)
        sim[u] = inter / union
    by_sim = sorted(range(n_users), key=lambda u: (-sim[u], u))
    candidates = by_sim[:n_target]

    kept = set()
    for u in candidates:
        restricted = items_of[u] & core
        if len(restricted) > threshold:
            for i in restricted:
                kept.add((u, i))
    return kept


def full_sort_metrics(scores, train_items, test_items, k):
    """Per-user precision/recall/NDCG from a plain Python full sort."""
    precisions, recalls, ndcgs = [], [], []
    for u in range(len(scores)):
        relevant = set(test_items[u])
        if not relevant:
            continue
        ranked = sorted(
            (i for i in range(len(scores[u])) if i not in set(train_items[u])),
            key=lambda i: (-scores[u][i], i),
        )[:k]
        hits = [p for p, i in enumerate(ranked) if i in relevant]
        dcg = sum(1 / math.log2(p + 2) for p in hits)
        idcg = sum(1 / math.log2(p + 2) for p in range(min(k, len(relevant))))
        precisions.append(len(hits) / k)
        recalls.append(len(hits) / len(relevant))
        ndcgs.append(dcg / idcg)
    n = len(recalls)
    return math.fsum(precisions) / n, math.fsum(recalls) / n, math.fsum(ndcgs) / n
