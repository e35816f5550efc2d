"""ASR, ADR, ACD, classification margin, and accuracy.

The evaluation population N_s is the set of targets classified correctly
before the attack; every aggregate here is defined over it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError, EmptySet, UndefinedBaseline
from .gcn import ModelParams, predict
from .graphs import Graph, NodeSplit

Array = np.ndarray

EVAL_TARGET_CAP = 500


def classification_margin(yp: Array, i: int, true_label: int) -> float:
    """Best wrong-class confidence minus true-class confidence.

    Positive means the node is misclassified under argmax (up to exact ties).
    """
    row = yp[i]
    true_conf = row[true_label]
    rest = np.delete(row, true_label)
    return float(rest.max() - true_conf)


@dataclass(frozen=True)
class NodeRecord:
    node: int
    true_label: int
    correct_before: bool
    success: bool
    cd_before: float
    cd_after: float


@dataclass
class EvalReport:
    """Aggregated attack/defense scores plus the per-node records behind them."""

    dataset: str
    defense: str
    attack: str
    asr: float
    accuracy: float
    records: list[NodeRecord]
    adr: float | None = None
    acd: float | None = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        values = [self.asr, self.accuracy] + [
            v for v in (self.adr, self.acd) if v is not None
        ]
        if any(not np.isfinite(v) for v in values):
            raise DataError(f"non-finite aggregate in report {self.dataset}/{self.attack}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["records"] = [asdict(r) for r in self.records]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        records = [NodeRecord(**r) for r in d.pop("records")]
        return cls(records=records, **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))


def ns_records(records: list[NodeRecord]) -> list[NodeRecord]:
    return [r for r in records if r.correct_before]


def asr(records: list[NodeRecord]) -> float:
    """Successfully attacked fraction of the correctly-classified targets."""
    ns = ns_records(records)
    if not ns:
        raise EmptySet("no correctly-classified targets to attack")
    return sum(r.success for r in ns) / len(ns)


def acd(records: list[NodeRecord]) -> float:
    """Mean change in classification margin over N_s."""
    ns = ns_records(records)
    if not ns:
        raise EmptySet("no correctly-classified targets")
    return float(np.mean([r.cd_after - r.cd_before for r in ns]))


def adr(asr_undefended: float, asr_defended: float) -> float:
    """Relative ASR reduction granted by a defense."""
    if asr_undefended == 0:
        raise UndefinedBaseline("undefended attack never succeeded; ADR undefined")
    return (asr_undefended - asr_defended) / asr_undefended


def accuracy(p: ModelParams, g: Graph, split: NodeSplit, subset: Array) -> float:
    subset = np.asarray(subset, dtype=np.int64)
    if subset.size == 0:
        raise EmptySet("accuracy over an empty subset")
    labels, _ = predict(p, g)
    return float((labels[subset] == split.labels[subset]).mean())


def sample_targets(candidates: Array, cap: int, seed: int) -> Array:
    """Seeded uniform sample of at most `cap` targets, in ascending order."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size <= cap:
        return np.sort(candidates)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(candidates, size=cap, replace=False))
