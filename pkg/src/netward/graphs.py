"""Canonical graph representation and feasible single-link edits.

Provides:
- Graph / NodeSplit value types (immutable after construction)
- normalize_adjacency: symmetric normalization D^{-1/2} (A + I) D^{-1/2}
- flip_edge: apply one feasible link addition/removal, returning a new Graph
- candidate_flips: enumerate every feasible flip incident to a target node
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleFlip, SelfLoop, ShapeMismatch

Array = np.ndarray

ADD = 1
REMOVE = -1


def _freeze(a: Array) -> Array:
    # Copy writeable inputs so the caller's buffer stays theirs; arrays that are
    # already read-only (e.g. from another Graph) are shared safely.
    if a.flags.writeable:
        a = a.copy()
        a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph with binary adjacency and optional node features.

    adjacency is n x n float64 with entries exactly 0.0 or 1.0, symmetric,
    zero diagonal. features, when present, is an n x C float64 matrix; when
    absent consumers substitute the identity.
    """

    adjacency: Array
    features: Array | None = None
    name: str = ""

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeMismatch(f"adjacency must be square, got {a.shape}")
        if not np.all((a == 0.0) | (a == 1.0)):
            raise ValueError("adjacency entries must be exactly 0 or 1")
        if np.any(np.diag(a) != 0.0):
            raise ValueError("adjacency diagonal must be zero")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        object.__setattr__(self, "adjacency", _freeze(a))
        if self.features is not None:
            x = np.asarray(self.features, dtype=np.float64)
            if x.ndim != 2 or x.shape[0] != a.shape[0]:
                raise ShapeMismatch(
                    f"features must have {a.shape[0]} rows, got {x.shape}"
                )
            object.__setattr__(self, "features", _freeze(x))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def degrees(self) -> Array:
        return self.adjacency.sum(axis=1)

    def feature_matrix(self) -> Array:
        """Features, or the identity when the dataset ships none."""
        if self.features is not None:
            return self.features
        return np.eye(self.n)

    def edge_list(self) -> list[tuple[int, int]]:
        iu, ju = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(iu.tolist(), ju.tolist()))

    def with_adjacency(self, adjacency: Array, name: str | None = None) -> "Graph":
        return Graph(adjacency, self.features, self.name if name is None else name)


@dataclass(frozen=True)
class NodeSplit:
    """Node labels plus disjoint train/val/test index sets."""

    labels: Array
    num_classes: int
    train: Array
    val: Array
    test: Array

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        train = np.asarray(self.train, dtype=np.int64)
        val = np.asarray(self.val, dtype=np.int64)
        test = np.asarray(self.test, dtype=np.int64)
        n = labels.shape[0]
        for name, idx in (("train", train), ("val", val), ("test", test)):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValueError(f"{name} index out of range for n={n}")
        if (
            np.intersect1d(train, val).size
            or np.intersect1d(train, test).size
            or np.intersect1d(val, test).size
        ):
            raise ValueError("train/val/test sets must be disjoint")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")
        present = np.unique(labels)
        if present.size != self.num_classes:
            raise ValueError(
                f"every class in [0,{self.num_classes}) must appear in labels"
            )
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "train", _freeze(np.sort(train)))
        object.__setattr__(self, "val", _freeze(np.sort(val)))
        object.__setattr__(self, "test", _freeze(np.sort(test)))

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def onehot(self) -> Array:
        y = np.zeros((self.n, self.num_classes))
        y[np.arange(self.n), self.labels] = 1.0
        return y


def normalize_adjacency(g: Graph) -> Array:
    """Symmetrically normalized adjacency with self-loops.

    Abar[i][j] = (A + I)[i][j] / sqrt(d_i * d_j) with d_i = 1 + degree(i).
    d_i >= 1 always, so no division by zero is possible.
    """
    b = g.adjacency + np.eye(g.n)
    s = 1.0 / np.sqrt(b.sum(axis=1))
    return b * np.outer(s, s)


def flip_edge(g: Graph, i: int, j: int, theta: int) -> Graph:
    """Return a copy of g with the (i, j) link flipped by theta in {-1, +1}.

    theta = +1 adds a missing link, theta = -1 removes an existing one;
    anything else would leave the binary adjacency invariant broken.
    """
    if i == j:
        raise SelfLoop(f"cannot flip self-loop at node {i}")
    if theta not in (ADD, REMOVE):
        raise InfeasibleFlip(f"theta must be -1 or +1, got {theta}")
    current = g.adjacency[i, j]
    new = current + theta
    if new not in (0.0, 1.0):
        raise InfeasibleFlip(
            f"flip ({i},{j},{theta:+d}) would set entry to {new}, outside {{0,1}}"
        )
    a = g.adjacency.copy()
    a[i, j] = new
    a[j, i] = new
    a.setflags(write=False)  # hand ownership to the new Graph, skipping a re-copy
    return g.with_adjacency(a)


def candidate_flips(g: Graph, target: int) -> list[tuple[int, int, int]]:
    """Every feasible flip incident to target: remove existing links, add missing.

    Returns exactly n - 1 entries sorted by (min(i,j), max(i,j)).
    """
    if not 0 <= target < g.n:
        raise ShapeMismatch(f"target {target} out of range for n={g.n}")
    row = g.adjacency[target]
    flips = []
    for j in range(g.n):
        if j == target:
            continue
        theta = REMOVE if row[j] == 1.0 else ADD
        flips.append((min(target, j), max(target, j), theta))
    flips.sort(key=lambda f: (f[0], f[1]))
    return flips
