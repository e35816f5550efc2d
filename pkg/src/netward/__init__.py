"""netward: train GCN node classifiers, attack them with single-link flips,
defend them, and score the defenses (ASR / ADR / ACD), including a
community-deception evaluation."""

__version__ = "0.1.0"

from .graphs import Graph, NodeSplit, candidate_flips, flip_edge, normalize_adjacency
from .gcn import ModelParams, TrainConfig, predict, train
from .attacks import AttackConfig, AttackOutcome, brute_force_oracle, fga, nettack_lite, random_flip
from .defenses import DefendedModel, DefenseSpec, build_defense
from .metrics import EvalReport, NodeRecord, accuracy, acd, adr, asr, classification_margin
from .community import Partition, deception_success, louvain, modularity
from .evaluate import evaluate_attack
from .pipeline import ExperimentConfig, RunRecord, emit_report, run_pipeline

__all__ = [
    "Graph",
    "NodeSplit",
    "normalize_adjacency",
    "flip_edge",
    "candidate_flips",
    "ModelParams",
    "TrainConfig",
    "train",
    "predict",
    "AttackConfig",
    "AttackOutcome",
    "fga",
    "nettack_lite",
    "random_flip",
    "brute_force_oracle",
    "DefenseSpec",
    "DefendedModel",
    "build_defense",
    "EvalReport",
    "NodeRecord",
    "classification_margin",
    "asr",
    "adr",
    "acd",
    "accuracy",
    "Partition",
    "louvain",
    "modularity",
    "deception_success",
    "evaluate_attack",
    "ExperimentConfig",
    "RunRecord",
    "run_pipeline",
    "emit_report",
    "__version__",
]
