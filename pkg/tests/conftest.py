import numpy as np
import pytest

from netward.gcn import ModelParams, TrainConfig, glorot, train
from netward.graphs import Graph, NodeSplit


def random_graph(rng, n, edge_prob=0.35, features=None, min_degree=0):
    """Random symmetric binary graph; optionally re-sampled until min degree holds."""
    while True:
        upper = rng.random((n, n)) < edge_prob
        a = np.triu(upper, k=1)
        a = (a | a.T).astype(float)
        if n == 1 or a.sum(axis=1).min() >= min_degree:
            return Graph(a, features)


def random_split(rng, n, num_classes, train_frac=0.5):
    """Random labels (every class present) and a train/rest split."""
    labels = rng.integers(0, num_classes, size=n)
    labels[:num_classes] = np.arange(num_classes)  # force every class to appear
    perm = rng.permutation(n)
    k = max(1, int(train_frac * n))
    return NodeSplit(
        labels=labels,
        num_classes=num_classes,
        train=perm[:k],
        val=perm[k : k + (n - k) // 2],
        test=perm[k + (n - k) // 2 :],
    )


def random_params(rng, in_dim, hidden, num_classes, scale=1.0):
    return ModelParams(
        scale * glorot(rng, in_dim, hidden), scale * glorot(rng, hidden, num_classes)
    )


def two_cliques_dataset(k=6):
    """Two disconnected k-cliques, labels aligned with the cliques."""
    n = 2 * k
    a = np.zeros((n, n))
    a[:k, :k] = 1.0
    a[k:, k:] = 1.0
    np.fill_diagonal(a, 0.0)
    g = Graph(a, name="two-cliques")
    labels = np.array([0] * k + [1] * k)
    train = np.array([0, 1, k, k + 1])
    val = np.array([2, k + 2])
    test = np.array([i for i in range(n) if i not in set(train) | set(val)])
    split = NodeSplit(labels, 2, train, val, test)
    return g, split


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def trained_toy():
    """A small trained model on a 24-node homophilous random graph."""
    rng = np.random.default_rng(7)
    n, k = 24, 3
    labels = np.repeat(np.arange(k), n // k)
    a = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            p = 0.45 if labels[i] == labels[j] else 0.05
            if rng.random() < p:
                a[i, j] = a[j, i] = 1.0
    g = Graph(a, name="toy")
    perm = rng.permutation(n)
    split = NodeSplit(labels, k, perm[:10], perm[10:14], perm[14:])
    params = train(g, split, TrainConfig(epochs=120, seed=3))
    return g, split, params
