"""Analytic gradients vs the central finite-difference oracle."""

import numpy as np
import pytest

from netward.gcn import loss_and_grads, onehot_targets, scel_targets, softmax_rows

from conftest import random_graph, random_params, random_split
from fd_oracle import (
    max_rel_error,
    numeric_grad,
    reference_combined_loss,
    reference_loss,
)

TOL = 1e-4


def _case(seed, with_features=True):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 16))
    num_classes = int(rng.integers(2, 5))
    hidden = int(rng.integers(3, 7))
    x = rng.normal(size=(n, 4)) if with_features else None
    g = random_graph(rng, n, features=x)
    split = random_split(rng, n, num_classes)
    p = random_params(rng, 4 if with_features else n, hidden, num_classes)
    node_set = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
    return g, split, p, node_set


def _targets(split, mode, rng):
    if mode == "ce":
        return onehot_targets(split), None
    if mode == "scel":
        return scel_targets(split), None
    soft = softmax_rows(rng.normal(size=(split.n, split.num_classes)))
    return None, soft


@pytest.mark.parametrize("mode", ["ce", "scel", "combined"])
@pytest.mark.parametrize("seed", range(4))
def test_gradients_match_finite_differences(mode, seed):
    g, split, p, node_set = _case(seed * 31 + 5, with_features=seed % 2 == 0)
    rng = np.random.default_rng(seed + 999)
    temperature = 2.0 if mode == "combined" else 1.0
    q, soft = _targets(split, mode, rng)

    loss, grads = loss_and_grads(
        p,
        g,
        split,
        node_set,
        loss_mode=mode,
        temperature=temperature,
        soft_labels=soft,
        want_adjacency=True,
    )

    x = g.features
    if mode == "combined":
        ref = lambda a_raw, w0, w1: reference_combined_loss(
            a_raw, x, w0, w1, soft, onehot_targets(split), node_set, temperature
        )
    else:
        ref = lambda a_raw, w0, w1: reference_loss(
            a_raw, x, w0, w1, q, node_set, temperature
        )

    assert loss == pytest.approx(ref(g.adjacency, p.w0, p.w1), rel=1e-10)

    fd_w0 = numeric_grad(lambda w: ref(g.adjacency, w, p.w1), p.w0)
    fd_w1 = numeric_grad(lambda w: ref(g.adjacency, p.w0, w), p.w1)
    fd_a = numeric_grad(lambda a: ref(a, p.w0, p.w1), g.adjacency)
    fd_a_sym = 0.5 * (fd_a + fd_a.T)

    assert max_rel_error(grads["w0"], fd_w0) <= TOL
    assert max_rel_error(grads["w1"], fd_w1) <= TOL
    assert max_rel_error(grads["adjacency"], fd_a_sym) <= TOL


def test_zero_output_weights_give_zero_adjacency_gradient(rng):
    g, split, p, _ = _case(11)
    p_zero = type(p)(p.w0, np.zeros_like(p.w1))
    _, grads = loss_and_grads(
        p_zero, g, split, np.arange(g.n), want_adjacency=True
    )
    assert np.allclose(grads["adjacency"], 0.0)


def test_adjacency_gradient_is_symmetric():
    g, split, p, node_set = _case(17)
    _, grads = loss_and_grads(p, g, split, node_set, want_adjacency=True)
    np.testing.assert_allclose(grads["adjacency"], grads["adjacency"].T)


def test_single_target_restriction_matches_manual_sum():
    # loss over a two-node set equals the sum of single-node losses
    g, split, p, _ = _case(23)
    l0, _ = loss_and_grads(p, g, split, np.array([0]))
    l1, _ = loss_and_grads(p, g, split, np.array([1]))
    l01, _ = loss_and_grads(p, g, split, np.array([0, 1]))
    assert l01 == pytest.approx(l0 + l1, rel=1e-12)
