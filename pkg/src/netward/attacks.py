"""Per-target single-link attacks against a trained surrogate.

- fga: picks the incident flip with the largest-magnitude adjacency gradient
  whose sign actually raises the target's loss.
- nettack_lite: scores every incident flip by the margin damage it causes,
  under a no-node-isolation degree filter.
- random_flip: seeded uniform control baseline.
- brute_force_oracle: exhaustive single-flip ranking by naive full forwards,
  used to validate the two heuristics.

SurrogateView caches one (model, graph) forward pass so per-target work is a
few matrix-vector products instead of repeated full forwards. Everything the
view computes is checked against the naive path in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoFeasibleFlip, TooLarge
from .gcn import ModelParams, forward, softmax_rows
from .graphs import Graph, NodeSplit, candidate_flips, flip_edge, normalize_adjacency
from .metrics import classification_margin

Array = np.ndarray

ORACLE_MAX_NODES = 500


@dataclass(frozen=True)
class AttackConfig:
    method: str = "fga"  # fga | nettack | random
    budget: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("fga", "nettack", "random"):
            raise ValueError(f"unknown attack method {self.method!r}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")


@dataclass(frozen=True)
class AttackOutcome:
    target: int
    chosen_flips: list[tuple[int, int, int]]
    perturbed: Graph
    success: bool
    margin_before: float
    margin_after: float


class SurrogateView:
    """Read-only precomputation of one (model, graph) pair.

    Holds the normalized adjacency and the layer activations at T=1, and
    answers three per-target questions cheaply: current margin, confidence row
    after one incident flip, and the target's row of the symmetrized adjacency
    gradient of its cross-entropy loss.
    """

    def __init__(self, p: ModelParams, g: Graph):
        self.params = p
        self.graph = g
        n = g.n
        self.b = g.adjacency + np.eye(n)
        self.deg = self.b.sum(axis=1)  # d_i = 1 + degree(i)
        self.s = 1.0 / np.sqrt(self.deg)
        self.abar = self.b * np.outer(self.s, self.s)
        x = g.features
        self.u = p.w0 if x is None else x @ p.w0
        self.pre = self.abar @ self.u
        self.hidden = np.maximum(self.pre, 0.0)
        self.v = self.hidden @ p.w1
        self.z = self.abar @ self.v
        self.yp = softmax_rows(self.z, 1.0)
        self.mask = self.pre > 0.0

    # -- predictions --------------------------------------------------------

    def margin(self, node: int, label: int) -> float:
        return classification_margin(self.yp, node, label)

    def confidence_row(self, node: int) -> Array:
        return self.yp[node]

    def confidence_after_flip(self, node: int, flip: tuple[int, int, int]) -> Array:
        """Node's confidence row after applying one flip, by a row-targeted forward.

        Only the hidden rows that feed the node's output row are recomputed;
        the result equals a full forward on the flipped graph.
        """
        i, j, theta = flip
        d2 = self.deg.copy()
        d2[i] += theta
        d2[j] += theta
        s2 = 1.0 / np.sqrt(d2)

        brow = self.b[node].copy()
        if node == i:
            brow[j] += theta
        elif node == j:
            brow[i] += theta
        rows = np.nonzero(brow)[0]

        bsub = self.b[rows].copy()
        pos_i = np.searchsorted(rows, i)
        if pos_i < len(rows) and rows[pos_i] == i:
            bsub[pos_i, j] += theta
        pos_j = np.searchsorted(rows, j)
        if pos_j < len(rows) and rows[pos_j] == j:
            bsub[pos_j, i] += theta

        asub = (s2[rows, None] * bsub) * s2[None, :]
        hidden = np.maximum(asub @ self.u, 0.0)
        arow = brow[rows] * (s2[node] * s2[rows])
        z_row = (arow @ hidden) @ self.params.w1
        e = np.exp(z_row - z_row.max())
        return e / e.sum()

    def margin_after_flip(self, node: int, label: int, flip) -> float:
        row = self.confidence_after_flip(node, flip)
        return classification_margin(row[None, :], 0, label)

    # -- gradients ----------------------------------------------------------

    def target_grad_row(self, target: int, label: int) -> Array:
        """Row `target` of the symmetrized adjacency gradient of the target's
        cross-entropy at T=1 (matches gcn.grad_adjacency restricted to that row)."""
        n = self.graph.n
        q = np.zeros(self.yp.shape[1])
        q[label] = 1.0
        gz_t = self.yp[target] - q
        c = self.abar[:, target]
        a_vec = self.v @ gz_t  # row `target` of gz @ V.T
        w = self.params.w1 @ gz_t
        dp = (c[:, None] * w[None, :]) * self.mask

        d2_row_t = self.u @ (dp[target])
        d2_col_t = dp @ self.u[target]

        rowsums = (dp * self.pre).sum(axis=1)
        rowsums[target] += a_vec @ c
        colsums = ((self.abar @ dp) * self.u).sum(axis=1)
        colsums += a_vec * c
        r = -0.5 * (self.s * self.s) * (rowsums + colsums)

        dabar_row = a_vec + d2_row_t
        da_row = dabar_row * (self.s[target] * self.s) + r[target]
        dabar_col = d2_col_t.copy()
        dabar_col[target] += a_vec[target]
        da_col = dabar_col * (self.s * self.s[target]) + r
        return 0.5 * (da_row + da_col)


# ---------------------------------------------------------------------------
# Attacks
# ---------------------------------------------------------------------------


def _finish(
    p: ModelParams,
    g: Graph,
    split: NodeSplit,
    target: int,
    flips: list,
    cur: Graph,
    view0: SurrogateView,
    last_view: SurrogateView,
) -> AttackOutcome:
    label = int(split.labels[target])
    margin_before = view0.margin(target, label)
    if len(flips) == 0:
        after_row = view0.confidence_row(target)
    else:
        after_row = last_view.confidence_after_flip(target, flips[-1])
    margin_after = classification_margin(after_row[None, :], 0, label)
    success = int(after_row.argmax()) != label
    return AttackOutcome(
        target=target,
        chosen_flips=flips,
        perturbed=cur,
        success=success,
        margin_before=margin_before,
        margin_after=margin_after,
    )


def fga(
    p: ModelParams,
    g: Graph,
    split: NodeSplit,
    target: int,
    budget: int = 1,
    view: SurrogateView | None = None,
) -> AttackOutcome:
    """Fast gradient attack: flip the incident link with the largest |gradient|.

    Adding a link requires a positive gradient (raises the loss), removing an
    existing link a negative one. Ties and the all-zero-gradient case fall back
    to the lowest-index candidate.
    """
    label = int(split.labels[target])
    view0 = view if view is not None and view.graph is g else SurrogateView(p, g)
    cur, cur_view, last_view = g, view0, view0
    flips: list[tuple[int, int, int]] = []
    for _ in range(budget):
        grad_row = cur_view.target_grad_row(target, label)
        cands = candidate_flips(cur, target)
        if not cands:
            raise NoFeasibleFlip(f"node {target} has no candidate flips")
        best = None
        for i, j, theta in cands:
            other = j if i == target else i
            gval = grad_row[other]
            if (theta > 0 and gval > 0) or (theta < 0 and gval < 0):
                if best is None or abs(gval) > best[0]:
                    best = (abs(gval), (i, j, theta))
        chosen = best[1] if best is not None else cands[0]
        flips.append(chosen)
        last_view = cur_view
        cur = flip_edge(cur, *chosen)
        if len(flips) < budget:
            cur_view = SurrogateView(p, cur)
    return _finish(p, g, split, target, flips, cur, view0, last_view)


def nettack_lite(
    p: ModelParams,
    g: Graph,
    split: NodeSplit,
    target: int,
    budget: int = 1,
    view: SurrogateView | None = None,
) -> AttackOutcome:
    """Margin-damage attack under a degree-preservation filter.

    Candidates that would isolate a node (reduce any degree to zero) are
    dropped; the remaining flip with the largest margin increase wins, ties
    going to the lowest-index candidate.
    """
    label = int(split.labels[target])
    view0 = view if view is not None and view.graph is g else SurrogateView(p, g)
    cur, cur_view, last_view = g, view0, view0
    flips: list[tuple[int, int, int]] = []
    for _ in range(budget):
        degrees = cur.degrees()
        margin_now = cur_view.margin(target, label)
        best = None
        for i, j, theta in candidate_flips(cur, target):
            if theta < 0 and (degrees[i] <= 1 or degrees[j] <= 1):
                continue  # would isolate an endpoint
            score = cur_view.margin_after_flip(target, label, (i, j, theta)) - margin_now
            if best is None or score > best[0]:
                best = (score, (i, j, theta))
        if best is None:
            raise NoFeasibleFlip(
                f"every candidate flip at node {target} fails the degree filter"
            )
        flips.append(best[1])
        last_view = cur_view
        cur = flip_edge(cur, *best[1])
        if len(flips) < budget:
            cur_view = SurrogateView(p, cur)
    return _finish(p, g, split, target, flips, cur, view0, last_view)


def random_flip(
    p: ModelParams,
    g: Graph,
    split: NodeSplit,
    target: int,
    budget: int = 1,
    seed: int = 0,
    view: SurrogateView | None = None,
) -> AttackOutcome:
    """Uniformly sampled feasible incident flips; deterministic given seed."""
    rng = np.random.default_rng(seed)
    view0 = view if view is not None and view.graph is g else SurrogateView(p, g)
    cur, cur_view, last_view = g, view0, view0
    flips: list[tuple[int, int, int]] = []
    for _ in range(budget):
        cands = candidate_flips(cur, target)
        if not cands:
            raise NoFeasibleFlip(f"node {target} has no candidate flips")
        chosen = cands[int(rng.integers(len(cands)))]
        flips.append(chosen)
        last_view = cur_view
        cur = flip_edge(cur, *chosen)
        if len(flips) < budget:
            cur_view = SurrogateView(p, cur)
    return _finish(p, g, split, target, flips, cur, view0, last_view)


def brute_force_oracle(
    p: ModelParams, g: Graph, split: NodeSplit, target: int
) -> list[tuple[tuple[int, int, int], float]]:
    """Exhaustive ranking of every feasible incident flip by target loss change.

    Deliberately naive: one full forward per candidate. Guarded to small
    graphs; this is the verification oracle for fga / nettack_lite.
    """
    if g.n > ORACLE_MAX_NODES:
        raise TooLarge(f"oracle limited to n <= {ORACLE_MAX_NODES}, got {g.n}")
    label = int(split.labels[target])

    def target_loss(graph: Graph) -> float:
        _, yp = forward(p, normalize_adjacency(graph), graph.features, 1.0)
        return float(-np.log(yp[target, label]))

    base = target_loss(g)
    scored = []
    for flip in candidate_flips(g, target):
        delta = target_loss(flip_edge(g, *flip)) - base
        scored.append((flip, delta))
    scored.sort(key=lambda item: -item[1])
    return scored


def run_attack(
    cfg: AttackConfig,
    p: ModelParams,
    g: Graph,
    split: NodeSplit,
    target: int,
    view: SurrogateView | None = None,
) -> AttackOutcome:
    if cfg.method == "fga":
        return fga(p, g, split, target, cfg.budget, view)
    if cfg.method == "nettack":
        return nettack_lite(p, g, split, target, cfg.budget, view)
    return random_flip(p, g, split, target, cfg.budget, cfg.seed + target, view)
