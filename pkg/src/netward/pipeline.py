"""Experiment orchestration: train -> attack baseline -> defend -> attack the
defense -> emit reports, with config-hash caching and deterministic artifacts.

Reports never embed wall-clock state, so a rerun with the same config and seed
produces byte-identical report files; timestamps live only in run.json.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .attacks import AttackConfig
from .community import community_attack_eval
from .datasets import ensure_dataset
from .defenses import DefenseSpec, build_defense, save_defended
from .errors import IoError, NetwardError, UndefinedBaseline
from .evaluate import evaluate_attack
from .gcn import TrainConfig, save_checkpoint
from .metrics import EVAL_TARGET_CAP, EvalReport, adr

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    defense: DefenseSpec = field(default_factory=DefenseSpec)
    attack: AttackConfig = field(default_factory=AttackConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data_dir: str = "data"
    out_dir: str = "runs"
    eval_cap: int = EVAL_TARGET_CAP
    # transfer: attacks generated on the undefended baseline surrogate;
    # adaptive: attacks recomputed against the defended model itself
    eval_protocol: str = "transfer"
    community_eval: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.eval_protocol not in ("transfer", "adaptive"):
            raise ValueError(f"unknown eval protocol {self.eval_protocol!r}")
        if self.defense.strategy == "target_at" and self.defense.protected_label is None:
            raise ValueError("target_at requires a protected label")

    def canonical(self) -> str:
        d = {
            "dataset": self.dataset,
            "defense": asdict(self.defense),
            "attack": asdict(self.attack),
            "train": asdict(self.train),
            "eval_cap": self.eval_cap,
            "eval_protocol": self.eval_protocol,
            "community_eval": self.community_eval,
            "seed": self.seed,
        }
        return json.dumps(d, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(
            (self.canonical() + "|" + __version__).encode()
        ).hexdigest()[:16]


@dataclass
class RunRecord:
    config_hash: str
    version: str
    artifacts: dict
    started: float
    finished: float
    cache_hit: bool = False

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True))


class StageError(NetwardError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _pair_adr(base: EvalReport, defended: EvalReport) -> None:
    try:
        defended.adr = adr(base.asr, defended.asr)
    except UndefinedBaseline:
        defended.adr = None
        defended.extra["adr_note"] = "undefined (undefended attack never succeeded)"


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except NetwardError as e:
        raise StageError(name, e) from e


def run_pipeline(cfg: ExperimentConfig) -> RunRecord:
    started = time.time()
    run_dir = Path(cfg.out_dir) / f"{cfg.dataset}-{cfg.defense.strategy}-{cfg.config_hash()}"
    run_json = run_dir / "run.json"
    if run_json.exists():
        prior = json.loads(run_json.read_text())
        if prior["config_hash"] == cfg.config_hash() and prior["version"] == __version__:
            paths = []
            for value in prior["artifacts"].values():
                paths.extend(value if isinstance(value, list) else [value])
            if all(Path(p).exists() for p in paths):
                log.info("cache hit for %s", run_dir)
                return RunRecord(**{**prior, "cache_hit": True})
    run_dir.mkdir(parents=True, exist_ok=True)

    g, split, manifest = _stage(
        "load-dataset", ensure_dataset, cfg.dataset, Path(cfg.data_dir), cfg.seed
    )

    baseline = _stage(
        "train-undefended",
        build_defense,
        g,
        split,
        cfg.train,
        DefenseSpec(strategy="none", seed=cfg.seed),
    )
    save_checkpoint(run_dir / "baseline.ckpt", baseline.params, g.n)

    reports: list[EvalReport] = []
    provenance = {
        "config": json.loads(cfg.canonical()),
        "version": __version__,
        "dataset_origin": manifest.origin,
    }

    if cfg.community_eval:
        reports += _community_stage(cfg, g, split, baseline)
    else:
        reports += _classification_stage(cfg, g, split, baseline, run_dir)

    for r in reports:
        r.extra.update(provenance)

    artifacts = _stage("emit-report", emit_report, reports, run_dir)
    artifacts["baseline_checkpoint"] = str(run_dir / "baseline.ckpt")
    record = RunRecord(
        config_hash=cfg.config_hash(),
        version=__version__,
        artifacts=artifacts,
        started=started,
        finished=time.time(),
    )
    record.save(run_json)
    return record


def _classification_stage(cfg, g, split, baseline, run_dir) -> list[EvalReport]:
    base_report = _stage(
        "evaluate-attack-undefended",
        evaluate_attack,
        baseline.params,
        g,
        split,
        cfg.attack,
        cap=cfg.eval_cap,
        seed=cfg.seed,
        dataset=cfg.dataset,
        defense="none",
    )
    reports = [base_report]
    if cfg.defense.strategy == "none":
        return reports

    defended = _stage("build-defense", build_defense, g, split, cfg.train, cfg.defense)
    save_defended(defended, run_dir / "defense")

    attack_params = baseline.params if cfg.eval_protocol == "transfer" else None
    def_report = _stage(
        "evaluate-attack-defended",
        evaluate_attack,
        defended.params,
        g,
        split,
        cfg.attack,
        cap=cfg.eval_cap,
        seed=cfg.seed,
        dataset=cfg.dataset,
        defense=cfg.defense.strategy,
        attack_params=attack_params,
    )
    _pair_adr(base_report, def_report)
    reports.append(def_report)

    if cfg.defense.strategy == "target_at":
        reports += _protected_slice_reports(cfg, g, split, baseline, defended)
    return reports


def _protected_slice_reports(cfg, g, split, baseline, defended) -> list[EvalReport]:
    label = cfg.defense.protected_label
    pop = split.test[split.labels[split.test] == label]
    name = f"protected_label={label}"
    base = evaluate_attack(
        baseline.params,
        g,
        split,
        cfg.attack,
        population=pop,
        cap=cfg.eval_cap,
        seed=cfg.seed,
        dataset=cfg.dataset,
        defense="none",
        population_name=name,
    )
    attack_params = baseline.params if cfg.eval_protocol == "transfer" else None
    defended_rep = evaluate_attack(
        defended.params,
        g,
        split,
        cfg.attack,
        population=pop,
        cap=cfg.eval_cap,
        seed=cfg.seed,
        dataset=cfg.dataset,
        defense=cfg.defense.strategy,
        population_name=name,
        attack_params=attack_params,
    )
    _pair_adr(base, defended_rep)
    return [base, defended_rep]


def _community_stage(cfg, g, split, baseline) -> list[EvalReport]:
    base = _stage(
        "community-eval-undefended",
        community_attack_eval,
        g,
        split,
        baseline,
        cfg.attack,
        split.test,
        detector_seed=cfg.seed,
        dataset=cfg.dataset,
    )
    reports = [base]
    if cfg.defense.strategy == "none":
        return reports
    defended = _stage("build-defense", build_defense, g, split, cfg.train, cfg.defense)
    rep = _stage(
        "community-eval-defended",
        community_attack_eval,
        g,
        split,
        defended,
        cfg.attack,
        split.test,
        detector_seed=cfg.seed,
        dataset=cfg.dataset,
    )
    _pair_adr(base, rep)
    reports.append(rep)
    return reports


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def emit_report(reports: list[EvalReport], out_dir: Path) -> dict:
    """Write the pivoted CSV table, the full JSON dump, and per-node plot data.

    Any non-finite aggregate aborts with DataError before anything is written.
    """
    out_dir = Path(out_dir)
    for r in reports:
        r.validate()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        table_path = out_dir / "table.csv"
        _write_table(reports, table_path)
        dump_path = out_dir / "full_dump.json"
        dump_path.write_text(
            json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=1)
        )
        plot_paths = []
        for r in reports:
            pop = str(r.extra.get("population", "test")).replace("=", "-")
            name = f"cd_{r.dataset}_{r.attack}_{r.defense}_{pop}.tsv"
            lines = ["node\tcd_before\tcd_after"]
            lines += [f"{rec.node}\t{rec.cd_before!r}\t{rec.cd_after!r}" for rec in r.records]
            (out_dir / name).write_text("\n".join(lines) + "\n")
            plot_paths.append(str(out_dir / name))
    except OSError as e:
        raise IoError(f"cannot write report under {out_dir}: {e}") from e
    return {
        "table": str(table_path),
        "full_dump": str(dump_path),
        "plot_data": plot_paths,
    }


def _write_table(reports: list[EvalReport], path: Path) -> None:
    strategies = sorted({r.defense for r in reports})
    columns = ["dataset", "attack", "population"]
    for s in strategies:
        columns += [f"{s}_asr", f"{s}_adr", f"{s}_acd", f"{s}_accuracy"]
    rows: dict[tuple, dict] = {}
    for r in reports:
        key = (r.dataset, r.attack, str(r.extra.get("population", "test")))
        row = rows.setdefault(key, {"dataset": key[0], "attack": key[1], "population": key[2]})
        row[f"{r.defense}_asr"] = repr(r.asr)
        row[f"{r.defense}_adr"] = "" if r.adr is None else repr(r.adr)
        row[f"{r.defense}_acd"] = "" if r.acd is None else repr(r.acd)
        row[f"{r.defense}_accuracy"] = repr(r.accuracy)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, restval="")
        writer.writeheader()
        for key in sorted(rows):
            writer.writerow(rows[key])


def load_full_dump(path: Path) -> list[EvalReport]:
    return [EvalReport.from_dict(d) for d in json.loads(Path(path).read_text())]
