"""Community detection (Louvain) and community-deception evaluation.

The detector is classic greedy modularity maximization: seeded node sweeps
move nodes to the neighboring community with the largest modularity gain,
then communities are aggregated, until no gain above 1e-9 remains. The
per-pass modularity sequence is exposed so its monotonicity can be asserted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .attacks import AttackConfig, SurrogateView, run_attack
from .defenses import DefendedModel
from .errors import NoEdges
from .graphs import Graph, NodeSplit
from .metrics import EvalReport, NodeRecord, accuracy, asr

log = logging.getLogger(__name__)

Array = np.ndarray

GAIN_EPS = 1e-9


@dataclass(frozen=True)
class Partition:
    """Community assignment with contiguous ids 0..num_communities-1."""

    assignment: Array
    num_communities: int

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        ids = np.unique(a)
        if ids.size != self.num_communities or not np.array_equal(
            ids, np.arange(self.num_communities)
        ):
            raise ValueError("community ids must be contiguous 0..k-1")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    def members(self, c: int) -> Array:
        return np.nonzero(self.assignment == c)[0]


def _canonical(raw: Array) -> Partition:
    """Relabel community ids by first appearance in node order."""
    mapping: dict[int, int] = {}
    out = np.empty_like(raw)
    for i, c in enumerate(raw):
        if c not in mapping:
            mapping[c] = len(mapping)
        out[i] = mapping[c]
    return Partition(out, len(mapping))


def modularity(g: Graph, part: Partition) -> float:
    """Newman-Girvan modularity: sum_c (e_c/m - (d_c/2m)^2)."""
    m = g.num_edges
    if m == 0:
        raise NoEdges("modularity undefined on a graph with no edges")
    deg = g.degrees()
    q = 0.0
    for c in range(part.num_communities):
        nodes = part.members(c)
        e_c = g.adjacency[np.ix_(nodes, nodes)].sum() / 2.0
        d_c = deg[nodes].sum()
        q += e_c / m - (d_c / (2.0 * m)) ** 2
    return float(q)


def merge_delta(g: Graph, part: Partition, a: int, b: int) -> float:
    """Analytic modularity change from merging communities a and b."""
    m = g.num_edges
    if m == 0:
        raise NoEdges("modularity undefined on a graph with no edges")
    deg = g.degrees()
    na, nb = part.members(a), part.members(b)
    cross = g.adjacency[np.ix_(na, nb)].sum()
    return float(cross / m - 2.0 * deg[na].sum() * deg[nb].sum() / (2.0 * m) ** 2)


def merge_communities(part: Partition, a: int, b: int) -> Partition:
    raw = part.assignment.copy()
    raw[raw == b] = a
    return _canonical(raw)


def _local_moves(w: Array, comm: Array, rng: np.random.Generator) -> tuple[Array, bool]:
    """One round of node sweeps on the weighted aggregate; returns new communities."""
    n = w.shape[0]
    m2 = w.sum()
    k = w.sum(axis=1)
    sigma = np.zeros(n)
    for v in range(n):
        sigma[comm[v]] += k[v]

    moved_any = False
    improved = True
    sweeps = 0
    while improved and sweeps < 200:
        improved = False
        sweeps += 1
        for v in rng.permutation(n):
            a = comm[v]
            sigma[a] -= k[v]
            comm[v] = -1
            # weight from v to each neighboring community (self-weight excluded)
            links: dict[int, float] = {}
            row = w[v]
            for u in np.nonzero(row)[0]:
                if u == v:
                    continue
                cu = comm[u]
                if cu >= 0:
                    links[cu] = links.get(cu, 0.0) + row[u]
            links.setdefault(a, 0.0)

            def gain_of(c: int) -> float:
                return 2.0 * links[c] / m2 - 2.0 * k[v] * sigma[c] / (m2 * m2)

            # move only for a gain strictly above the threshold; scanning in
            # ascending id order makes near-ties resolve to the lowest id
            best_c, best_gain = a, gain_of(a)
            for c in sorted(links):
                if c == a:
                    continue
                gain = gain_of(c)
                if gain > best_gain + GAIN_EPS:
                    best_c, best_gain = c, gain
            comm[v] = best_c
            sigma[best_c] += k[v]
            if best_c != a:
                improved = True
                moved_any = True
    return comm, moved_any


def louvain_trace(g: Graph, seed: int = 0) -> tuple[Partition, list[float]]:
    """Louvain with the per-pass modularity sequence (monotone by construction)."""
    n = g.n
    if g.num_edges == 0:
        return Partition(np.zeros(n, dtype=np.int64), 1), []
    rng = np.random.default_rng(seed)
    w = g.adjacency.copy()
    membership = np.arange(n)
    qs: list[float] = []
    while True:
        comm = np.arange(w.shape[0])
        comm, moved = _local_moves(w, comm, rng)
        part = _canonical(comm)
        membership = part.assignment[membership]
        qs.append(modularity(g, _canonical(membership)))
        if not moved or part.num_communities == w.shape[0]:
            break
        onehot = np.zeros((w.shape[0], part.num_communities))
        onehot[np.arange(w.shape[0]), part.assignment] = 1.0
        w = onehot.T @ w @ onehot
    return _canonical(membership), qs


def louvain(g: Graph, seed: int = 0) -> Partition:
    part, _ = louvain_trace(g, seed)
    return part


# ---------------------------------------------------------------------------
# Community deception
# ---------------------------------------------------------------------------


def peer_fraction(part: Partition, target: int, peers: Array) -> float:
    peers = np.asarray(peers, dtype=np.int64)
    if peers.size == 0:
        return float("nan")
    return float((part.assignment[peers] == part.assignment[target]).mean())


def deception_success(
    part_before: Partition, part_after: Partition, target: int, peers: Array
) -> bool:
    """True iff the target loses its peer majority: the fraction of ground-truth
    community peers sharing its detected community drops below 0.5, having been
    at least 0.5 before. Targets without a prior majority never count."""
    peers = np.asarray(peers, dtype=np.int64)
    if peers.size == 0:
        return False
    before = peer_fraction(part_before, target, peers)
    after = peer_fraction(part_after, target, peers)
    return before >= 0.5 and after < 0.5


def community_attack_eval(
    g: Graph,
    split: NodeSplit,
    defense: DefendedModel,
    attack_cfg: AttackConfig,
    targets: Array,
    detector_seed: int = 0,
    dataset: str = "",
) -> EvalReport:
    """Attack the (defended) GCN surrogate per target, re-detect communities on
    each perturbed graph, and score peer-majority displacement.

    Mirrors N_s: targets without a prior peer majority are excluded. ACD is
    omitted (undefined for partitions).
    """
    part_before = louvain(g, detector_seed)
    p = defense.params
    view = SurrogateView(p, g)
    records = []
    for t in np.asarray(targets, dtype=np.int64):
        t = int(t)
        peers = np.nonzero(split.labels == split.labels[t])[0]
        peers = peers[peers != t]
        if peer_fraction(part_before, t, peers) < 0.5 or peers.size == 0:
            continue
        outcome = run_attack(attack_cfg, p, g, split, t, view=view)
        part_after = louvain(outcome.perturbed, detector_seed)
        records.append(
            NodeRecord(
                node=t,
                true_label=int(split.labels[t]),
                correct_before=True,
                success=deception_success(part_before, part_after, t, peers),
                cd_before=outcome.margin_before,
                cd_after=outcome.margin_after,
            )
        )
    report = EvalReport(
        dataset=dataset,
        defense=defense.strategy,
        attack=attack_cfg.method,
        asr=asr(records),
        accuracy=accuracy(p, g, split, split.test),
        records=records,
        acd=None,
        extra={
            "detector": "louvain",
            "detector_seed": int(detector_seed),
            "realized_targets": len(records),
            "transfer": "attack targets the GCN surrogate; perturbed graph handed to the detector",
        },
    )
    report.validate()
    return report
