"""Attack-vs-model evaluation: pick the target population, run the attack on
every sampled correctly-classified node, and aggregate the records.

Two protocols:
- adaptive: the attack computes its gradients/scores on the evaluated model
  itself (white-box adaptive attacker).
- transfer: the attack is generated against a separate attack model (the
  undefended baseline surrogate) and the evaluated model is judged on the
  resulting perturbed graphs.

N_s membership, margins, and success are always measured on the evaluated
model; only the flip selection differs.
"""

from __future__ import annotations

import logging

import numpy as np

from .attacks import AttackConfig, SurrogateView, run_attack
from .gcn import ModelParams, predict
from .graphs import Graph, NodeSplit
from .metrics import (
    EVAL_TARGET_CAP,
    EvalReport,
    NodeRecord,
    accuracy,
    acd,
    asr,
    classification_margin,
    sample_targets,
)

log = logging.getLogger(__name__)

Array = np.ndarray


def evaluate_attack(
    p: ModelParams,
    g: Graph,
    split: NodeSplit,
    attack_cfg: AttackConfig,
    population: Array | None = None,
    cap: int = EVAL_TARGET_CAP,
    seed: int = 0,
    dataset: str = "",
    defense: str = "none",
    population_name: str = "test",
    attack_params: ModelParams | None = None,
) -> EvalReport:
    """Attack every sampled target that the evaluated model classifies correctly.

    attack_params selects the model the attacker sees; None means the evaluated
    model itself (adaptive). At most `cap` targets are drawn seeded-uniformly
    from the evaluated model's own N_s.
    """
    population = split.test if population is None else np.asarray(population, np.int64)
    labels, _ = predict(p, g)
    correct = population[labels[population] == split.labels[population]]
    targets = sample_targets(correct, cap, seed)
    protocol = "adaptive" if attack_params is None else "transfer"
    attacker = p if attack_params is None else attack_params
    log.info(
        "evaluating %s (%s) on %s/%s: |N_s|=%d, attacking %d targets",
        attack_cfg.method,
        protocol,
        dataset,
        defense,
        correct.size,
        targets.size,
    )
    attack_view = SurrogateView(attacker, g)
    eval_view = attack_view if attacker is p else SurrogateView(p, g)
    records = []
    for t in targets:
        t = int(t)
        label = int(split.labels[t])
        outcome = run_attack(attack_cfg, attacker, g, split, t, view=attack_view)
        if eval_view is attack_view:
            success, cd_before, cd_after = (
                outcome.success,
                outcome.margin_before,
                outcome.margin_after,
            )
        else:
            cd_before = eval_view.margin(t, label)
            if len(outcome.chosen_flips) == 1:
                row = eval_view.confidence_after_flip(t, outcome.chosen_flips[0])
            else:
                _, yp = predict(p, outcome.perturbed)
                row = yp[t]
            cd_after = classification_margin(row[None, :], 0, label)
            success = int(row.argmax()) != label
        records.append(
            NodeRecord(
                node=t,
                true_label=label,
                correct_before=True,
                success=success,
                cd_before=cd_before,
                cd_after=cd_after,
            )
        )
    report = EvalReport(
        dataset=dataset,
        defense=defense,
        attack=attack_cfg.method,
        asr=asr(records),
        accuracy=accuracy(p, g, split, split.test),
        records=records,
        acd=acd(records),
        extra={
            "population": population_name,
            "population_size": int(population.size),
            "ns_size": int(correct.size),
            "realized_targets": int(targets.size),
            "target_cap": int(cap),
            "budget": attack_cfg.budget,
            "sampling_seed": int(seed),
            "protocol": protocol,
        },
    )
    report.validate()
    return report
