import numpy as np
import numpy.testing as npt
import pytest

from netward.errors import DivergedLoss
from netward.gcn import (
    ModelParams,
    TrainConfig,
    forward,
    load_checkpoint,
    loss_ce,
    loss_combined,
    loss_scel,
    loss_soft,
    predict,
    save_checkpoint,
    scel_targets,
    softmax_rows,
    train,
)
from netward.graphs import Graph, NodeSplit, normalize_adjacency

from conftest import random_graph, random_params, random_split, two_cliques_dataset


def split_1node(num_classes, label=0):
    # one node per class, with node 0 carrying `label` (swap keeps all classes present)
    lab = np.arange(num_classes)
    lab[0], lab[label] = label, 0
    return NodeSplit(lab, num_classes, np.arange(num_classes), np.array([]), np.array([]))


class TestForward:
    def test_zero_weights_uniform(self, rng):
        g = random_graph(rng, 6)
        p = ModelParams(np.zeros((6, 4)), np.zeros((4, 3)))
        _, yp = forward(p, normalize_adjacency(g), None)
        npt.assert_allclose(yp, 1.0 / 3)

    def test_temperature_two(self):
        # softmax([2,0]/2) = softmax([1,0])
        yp = softmax_rows(np.array([[2.0, 0.0]]), temperature=2.0)
        npt.assert_allclose(yp, [[0.73105858, 0.26894142]], atol=1e-8)

    def test_rows_sum_to_one(self, rng):
        z = rng.normal(scale=30.0, size=(20, 5))
        for t in (0.5, 1.0, 10.0, 1000.0):
            npt.assert_allclose(softmax_rows(z, t).sum(axis=1), 1.0, atol=1e-9)

    def test_large_temperature_flattens(self, rng):
        z = rng.normal(size=(8, 4))
        spread = [
            float(np.ptp(softmax_rows(z, t), axis=1).max()) for t in (1, 2, 4, 8, 16)
        ]
        assert all(a > b for a, b in zip(spread, spread[1:]))


class TestLosses:
    def test_ce_near_onehot_vanishes(self):
        split = split_1node(2)
        yp = np.array([[1.0 - 1e-12, 1e-12], [1e-12, 1.0 - 1e-12]])
        assert loss_ce(yp, split, np.array([0])) == pytest.approx(0.0, abs=1e-9)

    def test_ce_uniform_two_classes(self):
        split = split_1node(2)
        yp = np.full((2, 2), 0.5)
        assert loss_ce(yp, split, np.array([0])) == pytest.approx(np.log(2))
        assert loss_ce(yp, split, np.array([0, 1])) == pytest.approx(2 * np.log(2))

    def test_scel_target_row(self):
        split = split_1node(4, label=1)
        row = scel_targets(split)[0]
        npt.assert_allclose(row, [0.25, 1.0, 0.25, 0.25])

    def test_scel_single_class_equals_ce(self):
        split = NodeSplit(np.zeros(3, dtype=int), 1, np.array([0, 1]), np.array([]), np.array([2]))
        yp = np.ones((3, 1))
        assert loss_scel(yp, split, split.train) == loss_ce(yp, split, split.train)

    def test_scel_direct_value(self):
        split = split_1node(2, label=0)
        yp = np.full((2, 2), 0.5)
        expected = -(1.0 * np.log(0.5) + 0.5 * np.log(0.5))
        assert loss_scel(yp, split, np.array([0])) == pytest.approx(expected)
        assert expected == pytest.approx(1.5 * np.log(2))

    def test_soft_equals_entropy_at_equality(self, rng):
        yp = softmax_rows(rng.normal(size=(4, 3)))
        node_set = np.arange(4)
        entropy = -(yp * np.log(yp)).sum()
        assert loss_soft(yp, yp, node_set) == pytest.approx(entropy)

    def test_soft_onehot_reduces_to_ce(self):
        split = split_1node(2)
        yp = np.array([[0.7, 0.3], [0.4, 0.6]])
        assert loss_soft(yp, split.onehot(), np.array([0])) == pytest.approx(
            loss_ce(yp, split, np.array([0]))
        )

    def test_soft_direct_value(self):
        yp = np.array([[0.5, 0.5]])
        assert loss_soft(yp, np.array([[0.5, 0.5]]), np.array([0])) == pytest.approx(np.log(2))

    @pytest.mark.parametrize(
        "t,l_s,l_h,expected",
        [(1.0, 2.0, 4.0, 3.0), (10.0, 101.0, 0.0, 1.0), (10.0, 0.0, 1.01, 1.0)],
    )
    def test_combined_examples(self, t, l_s, l_h, expected):
        assert loss_combined(l_s, l_h, t) == pytest.approx(expected)

    def test_combined_weights_sum_to_one(self):
        for t in (0.1, 1.0, 3.7, 10.0, 250.0):
            assert loss_combined(1.0, 1.0, t) == pytest.approx(1.0)


class TestTrain:
    def test_separable_cliques_perfect(self):
        g, split = two_cliques_dataset()
        p = train(g, split, TrainConfig(epochs=100, seed=0))
        labels, _ = predict(p, g)
        assert (labels[split.test] == split.labels[split.test]).all()

    def test_deterministic(self):
        g, split = two_cliques_dataset()
        cfg = TrainConfig(epochs=30, seed=42)
        p1 = train(g, split, cfg)
        p2 = train(g, split, cfg)
        assert np.array_equal(p1.w0, p2.w0) and np.array_equal(p1.w1, p2.w1)

    def test_diverged_loss_raises(self):
        g, split = two_cliques_dataset()
        with np.errstate(all="ignore"), pytest.raises(DivergedLoss):
            train(g, split, TrainConfig(epochs=5, learning_rate=1e200, seed=0))

    def test_combined_requires_soft_labels(self):
        g, split = two_cliques_dataset()
        with pytest.raises(ValueError):
            train(g, split, TrainConfig(loss_mode="combined", seed=0))
        with pytest.raises(ValueError):
            train(g, split, TrainConfig(seed=0), soft_labels=np.ones((g.n, 2)) / 2)

    def test_loss_nonincreasing_on_toy(self):
        # near-convex regime: tiny lr, plain ce on a separable toy
        g, split = two_cliques_dataset()
        losses = []
        from netward.gcn import loss_and_grads

        for epochs in (1, 10, 40, 120):
            p = train(g, split, TrainConfig(epochs=epochs, learning_rate=0.005, seed=1))
            l, _ = loss_and_grads(p, g, split, split.train)
            losses.append(l)
        assert all(a >= b - 1e-9 for a, b in zip(losses, losses[1:]))


class TestPredict:
    def test_uniform_row_tie_breaks_to_zero(self):
        g = Graph(np.zeros((2, 2)))
        p = ModelParams(np.zeros((2, 3)), np.zeros((3, 4)))
        labels, _ = predict(p, g)
        assert (labels == 0).all()

    def test_argmax_row(self):
        yp = np.array([[0.05, 0.05, 0.05, 0.85]])
        assert yp.argmax(axis=1)[0] == 3

    def test_prediction_ignores_test_labels(self, rng):
        g = random_graph(rng, 10)
        split = random_split(rng, 10, 2)
        p = train(g, split, TrainConfig(epochs=20, seed=0))
        labels1, _ = predict(p, g)
        # relabel the test nodes arbitrarily; predictions cannot change
        new_labels = split.labels.copy()
        new_labels[split.test] = (new_labels[split.test] + 1) % 2
        if len(np.unique(new_labels)) == 2:
            labels2, _ = predict(p, g)
            npt.assert_array_equal(labels1, labels2)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        p = random_params(rng, 7, 5, 3)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, p, n=11)
        loaded, n = load_checkpoint(path)
        assert n == 11
        assert loaded.w0.tobytes() == p.w0.tobytes()
        assert loaded.w1.tobytes() == p.w1.tobytes()
        assert loaded.temperature == p.temperature

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_checkpoint(path)
