import math

import numpy as np
import pytest

from combigcn.evaluate import MetricsReport
from combigcn.graph import build_graphs
from combigcn.model import EmbeddingTable, propagate
from combigcn.preprocess import ingest, split
from combigcn.synthetic import two_block_dataset
from combigcn.trainer import (
    AdamState,
    TrainConfig,
    TrainTriple,
    adam_step,
    backward,
    batch_loss,
    bpr_loss,
    sample_epoch,
    train,
    triple_scores,
)
from conftest import random_graphs
from oracles import block_operator, finite_difference_grad, full_loss, stored_backprop


def random_instance(seed, n=4, m=5, d=3, batch=6, scale=1.0):
    rng = np.random.default_rng(seed)
    g = random_graphs(rng, n, m)
    phi = EmbeddingTable(scale * rng.normal(size=(n, d)), scale * rng.normal(size=(m, d)))
    triples = np.column_stack([rng.integers(n, size=batch), rng.integers(m, size=batch), rng.integers(m, size=batch)])
    return g, phi, triples


def max_relative_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


class TestSampling:
    def test_forced_negative(self):
        ds = ingest([("u", "a"), ("v", "b")])
        # u owns item 0; the only other item is 1
        t = sample_epoch(ds.with_pairs([0], [0]), 3)
        assert t.tolist() == [[0, 0, 1]]

    def test_count(self):
        ds = two_block_dataset(seed=1)
        assert sample_epoch(ds, 0).shape == (ds.n_interactions, 3)

    @pytest.mark.parametrize("seed", range(10))
    def test_negatives_unobserved(self, seed):
        ds = two_block_dataset(density=0.7, seed=seed)
        observed = ds.pairs()
        t = sample_epoch(ds, seed)
        assert all((u, j) not in observed for u, _, j in t.tolist())
        assert all((u, i) in observed for u, i, _ in t.tolist())

    def test_deterministic(self):
        ds = two_block_dataset(seed=2)
        assert np.array_equal(sample_epoch(ds, 5), sample_epoch(ds, 5))

    def test_saturated_user(self):
        ds = ingest([("u", "a"), ("u", "b"), ("v", "a")])
        with pytest.raises(ValueError, match="every item"):
            sample_epoch(ds, 0)


class TestLoss:
    def test_zero_margin(self):
        phi = EmbeddingTable([[0.0]], [[0.0]])
        assert bpr_loss([0.3], [0.3], phi, 0.0) == pytest.approx(math.log(2), abs=1e-12)

    def test_saturated(self):
        phi = EmbeddingTable([[0.0]], [[0.0]])
        assert bpr_loss([20.0], [0.0], phi, 0.0) < 1e-8

    def test_hand_case(self):
        phi = EmbeddingTable([[1.0, 1.0]], [[1.0, 1.0]])  # squared norm 4
        expected = math.log1p(math.exp(-0.5)) + 0.4
        assert bpr_loss([1.0], [0.5], phi, 0.1) == pytest.approx(expected, abs=1e-12)
        assert bpr_loss([1.0], [0.5], phi, 0.1) == pytest.approx(0.874077, abs=1e-6)

    def test_no_overflow(self):
        phi = EmbeddingTable([[0.0]], [[0.0]])
        assert bpr_loss([-700.0], [0.0], phi, 0.0) == pytest.approx(700.0)
        assert bpr_loss([700.0], [0.0], phi, 0.0) == pytest.approx(0.0, abs=1e-300)

    def test_order_invariant(self):
        g, phi, t = random_instance(0, batch=12)
        perm = np.random.default_rng(1).permutation(12)
        assert abs(batch_loss(t, phi, g, 2, 0.0) - batch_loss(t[perm], phi, g, 2, 0.0)) <= 1e-10


class TestBackward:
    def test_zero_margin_scalar_case(self):
        # one user, two items; e_i == e_j gives zero margin
        g, _, _ = random_instance(0, n=1, m=2, d=2)
        phi = EmbeddingTable([[0.3, -0.2]], [[0.5, 0.1], [0.5, 0.1]])
        trace = propagate(phi, g, 0)
        grads = backward([TrainTriple(0, 0, 1)], trace, g, phi, 0.0)
        eu, ei, ej = phi.user_embed[0], phi.item_embed[0], phi.item_embed[1]
        np.testing.assert_allclose(grads.user_embed[0], -0.5 * (ei - ej), atol=1e-15)
        np.testing.assert_allclose(grads.item_embed[0], -0.5 * eu, atol=1e-15)
        np.testing.assert_allclose(grads.item_embed[1], 0.5 * eu, atol=1e-15)

    def test_empty_batch_regulariser_only(self):
        g, phi, _ = random_instance(1)
        grads = backward(np.zeros((0, 3), dtype=int), propagate(phi, g, 2), g, phi, 0.25)
        assert np.array_equal(grads.stacked(), 2 * 0.25 * phi.stacked())

    @pytest.mark.parametrize("n_layers", [0, 1, 2, 3])
    @pytest.mark.parametrize("lam", [0.0, 1e-5, 1e-2])
    def test_finite_differences(self, n_layers, lam):
        g, phi, t = random_instance(10 + n_layers)
        a = block_operator(g.r_norm.to_dense(), g.w_norm.to_dense())
        e0 = phi.stacked()
        numeric = finite_difference_grad(
            lambda x: full_loss(x, e0.shape, a, n_layers, t.tolist(), phi.n_users, lam), e0.ravel()
        ).reshape(e0.shape)
        analytic = backward(t, propagate(phi, g, n_layers), g, phi, lam).stacked()
        assert max_relative_error(analytic, numeric) < 1e-4

    @pytest.mark.parametrize("n_layers", [0, 1, 2, 3])
    def test_matches_stored_intermediate_backprop(self, n_layers):
        g, phi, t = random_instance(20 + n_layers, n=6, m=7, d=4, batch=10)
        a = block_operator(g.r_norm.to_dense(), g.w_norm.to_dense())
        ref = stored_backprop(a, phi.stacked(), n_layers, t.tolist(), phi.n_users, 1e-3)
        got = backward(t, propagate(phi, g, n_layers), g, phi, 1e-3).stacked()
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-10)

    def test_shape_mismatch(self):
        g, phi, t = random_instance(2)
        other = EmbeddingTable(np.zeros((4, 2)), np.zeros((5, 2)))
        with pytest.raises(ValueError, match="shape"):
            backward(t, propagate(phi, g, 1), g, other, 0.0)


class TestAdam:
    def _scalar(self, x):
        return EmbeddingTable(np.array([[x]]), np.zeros((0, 1)))

    def test_zero_gradient_fixed_point(self):
        phi = self._scalar(1.5)
        state = AdamState.zeros_like(phi)
        for _ in range(3):
            adam_step(phi, self._scalar(0.0), state, 0.1)
        assert phi.user_embed[0, 0] == 1.5
        assert state.step_count == 3

    def test_zero_gradient_moments_decay(self):
        phi = self._scalar(1.5)
        state = AdamState.zeros_like(phi)
        state.first_moment[:] = 0.2
        state.second_moment[:] = 0.3
        adam_step(phi, self._scalar(0.0), state, 0.1)
        assert state.first_moment[0, 0] == pytest.approx(0.18)
        assert state.second_moment[0, 0] == pytest.approx(0.2997)
        assert state.step_count == 1

    @pytest.mark.parametrize("g", [3.0, -0.5])
    def test_first_step_is_signed_lr(self, g):
        phi = self._scalar(0.0)
        adam_step(phi, self._scalar(g), AdamState.zeros_like(phi), 0.01)
        assert phi.user_embed[0, 0] == pytest.approx(-0.01 * np.sign(g), rel=1e-6)

    def test_quadratic_convergence(self):
        # minimise x^2 from x = 0.5
        phi = self._scalar(0.5)
        state = AdamState.zeros_like(phi)
        x_ref, m_ref, v_ref = 0.5, 0.0, 0.0
        for t in range(1, 101):
            adam_step(phi, self._scalar(2 * phi.user_embed[0, 0]), state, 0.02)
            g = 2 * x_ref
            m_ref = 0.9 * m_ref + 0.1 * g
            v_ref = 0.999 * v_ref + 0.001 * g * g
            x_ref -= 0.02 * (m_ref / (1 - 0.9**t)) / (math.sqrt(v_ref / (1 - 0.999**t)) + 1e-8)
        assert abs(phi.user_embed[0, 0]) < 1e-3
        assert phi.user_embed[0, 0] == pytest.approx(x_ref, abs=1e-12)

    def test_small_lr_small_change(self):
        g, phi, t = random_instance(3)
        grads = backward(t, propagate(phi, g, 2), g, phi, 0.0)
        for lr in (1e-4, 1e-6):
            moved = phi.copy()
            adam_step(moved, grads, AdamState.zeros_like(phi), lr)
            assert np.max(np.abs(moved.stacked() - phi.stacked())) <= lr * (1 + 1e-6)

    def test_non_finite_gradient(self):
        phi = self._scalar(0.0)
        with pytest.raises(FloatingPointError):
            adam_step(phi, self._scalar(np.nan), AdamState.zeros_like(phi), 0.1)


class TestTrainLoop:
    def test_early_stop_arithmetic(self):
        ds = two_block_dataset(seed=0)
        tr, te = split(ds, 0.8, 0)
        g = build_graphs(tr)
        snapshots = []

        def stub(e_star):
            epoch = len(snapshots) + 1
            snapshots.append(e_star.copy())
            recall = 0.5 + 0.01 * epoch if epoch <= 12 else 0.3
            return MetricsReport(20, recall / 2, recall, recall, 10)

        cfg = TrainConfig(dim=4, layers=1, patience_epochs=50, max_epochs=1000, seed=0)
        phi, history = train(tr, te, g, cfg, evaluator=stub)
        assert len(history.records) == 62
        assert history.best_epoch == 12
        assert history.stopped_early
        np.testing.assert_array_equal(propagate(phi, g, 1).final, snapshots[11])

    def test_max_epochs(self):
        ds = two_block_dataset(seed=0)
        tr, te = split(ds, 0.8, 0)
        counter = iter(range(10**6))

        def always_better(e_star):
            return MetricsReport(20, 0.0, next(counter) * 1e-3, 0.0, 1)

        cfg = TrainConfig(dim=4, patience_epochs=2, max_epochs=5)
        _, history = train(tr, te, build_graphs(tr), cfg, evaluator=always_better)
        assert len(history.records) == 5 and history.best_epoch == 5 and not history.stopped_early

    def test_progress_lines(self):
        ds = two_block_dataset(seed=0)
        tr, te = split(ds, 0.8, 0)
        lines = []
        cfg = TrainConfig(dim=4, eval_k=10, patience_epochs=1, max_epochs=3)
        train(tr, te, build_graphs(tr), cfg, progress=lines.append)
        assert lines[0].startswith("epoch=1 loss=")
        for key in ("recall@10=", "precision@10=", "ndcg@10=", "best="):
            assert key in lines[0]

    def test_learns_two_blocks(self):
        ds = two_block_dataset(density=0.5, seed=0)
        tr, te = split(ds, 0.8, 0)
        cfg = TrainConfig(dim=16, eval_k=10, max_epochs=200, seed=0)
        _, history = train(tr, te, build_graphs(tr), cfg)
        losses = [r.loss for r in history.records[:10]]
        assert all(b < a for a, b in zip(losses, losses[1:]))
        assert history.records[history.best_epoch - 1].recall > 0.5

    def test_deterministic(self):
        ds = two_block_dataset(seed=3)
        tr, te = split(ds, 0.8, 3)
        cfg = TrainConfig(dim=8, eval_k=10, patience_epochs=3, max_epochs=8, seed=4)
        a = train(tr, te, build_graphs(tr), cfg)
        b = train(tr, te, build_graphs(tr), cfg)
        assert a[1] == b[1]
        assert np.array_equal(a[0].stacked(), b[0].stacked())

    def test_leakage_guard(self):
        ds = two_block_dataset(seed=0)
        tr, te = split(ds, 0.8, 0)
        with pytest.raises(ValueError, match="test interactions"):
            train(tr, te, build_graphs(ds), TrainConfig(dim=4, patience_epochs=1, max_epochs=2))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(patience_epochs=10, max_epochs=10)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)


def test_triple_scores_match_predict():
    g, phi, t = random_instance(5)
    trace = propagate(phi, g, 2)
    pos, neg = triple_scores(trace, t)
    n = phi.n_users
    for k, (u, i, j) in enumerate(t.tolist()):
        assert pos[k] == pytest.approx(trace.final[u] @ trace.final[n + i], abs=1e-14)
        assert neg[k] == pytest.approx(trace.final[u] @ trace.final[n + j], abs=1e-14)
