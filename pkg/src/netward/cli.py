"""Command-line interface.

Subcommands: train, attack, defend, evaluate, community, report.
Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .attacks import AttackConfig
from .datasets import DATASET_STATS, ensure_dataset, synthesize_dataset
from .defenses import DefenseSpec, build_defense, save_defended
from .errors import NetwardError
from .gcn import TrainConfig, save_checkpoint, train
from .metrics import EVAL_TARGET_CAP, accuracy
from .pipeline import ExperimentConfig, load_full_dump, emit_report, run_pipeline

USAGE_EXIT = 1
RUNTIME_EXIT = 2

DEFENSE_FLAGS = {
    "none": "none",
    "at": "at",
    "global-at": "global_at",
    "target-at": "target_at",
    "sd": "sd",
    "scel": "scel",
    "ensemble": "ensemble",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(USAGE_EXIT)


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=sorted(DATASET_STATS), required=False)
    p.add_argument("--defense", choices=sorted(DEFENSE_FLAGS), default="none")
    p.add_argument("--attack", choices=["fga", "nettack", "random"], default="fga")
    p.add_argument("--budget", type=int, default=1)
    p.add_argument("--temperature", type=float, default=10.0)
    p.add_argument("--target-label", type=int, default=None)
    p.add_argument("--drop-rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs")
    p.add_argument("--data-dir", default="data")
    p.add_argument("--cap", type=int, default=EVAL_TARGET_CAP,
                   help="max evaluation targets sampled from N_s")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--protocol", choices=["transfer", "adaptive"], default="transfer")
    p.add_argument("--config", default=None,
                   help="JSON config file; its values override flags")


def build_parser() -> _Parser:
    parser = _Parser(prog="netward", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("train", "train an undefended surrogate and save its checkpoint"),
        ("attack", "evaluate an attack against the undefended surrogate"),
        ("defend", "build a defended model and persist it"),
        ("evaluate", "full pipeline: baseline, defense, attack both, ADR"),
        ("community", "community-deception evaluation (Louvain detector)"),
        ("report", "re-emit tables from existing full dumps"),
        ("synth-data", "write stand-in dataset files matching published stats"),
    ]:
        p = sub.add_parser(name, help=helptext)
        if name == "report":
            p.add_argument("inputs", nargs="+", help="full_dump.json files")
            p.add_argument("--out", default="runs/report")
        else:
            _add_shared(p)
    return parser


def _apply_config_file(args: argparse.Namespace) -> argparse.Namespace:
    if getattr(args, "config", None):
        overrides = json.loads(Path(args.config).read_text())
        for key, value in overrides.items():
            attr = key.replace("-", "_")
            if not hasattr(args, attr):
                raise NetwardError(f"unknown config key {key!r}")
            setattr(args, attr, value)
    return args


def _defense_spec(args) -> DefenseSpec:
    return DefenseSpec(
        strategy=DEFENSE_FLAGS[args.defense],
        temperature=args.temperature,
        protected_label=args.target_label,
        drop_rate=args.drop_rate,
        attack_for_training=args.attack if args.attack != "random" else "fga",
        seed=args.seed,
    )


def _experiment_config(args, community=False, force_undefended=False) -> ExperimentConfig:
    defense = DefenseSpec(strategy="none", seed=args.seed) if force_undefended else _defense_spec(args)
    return ExperimentConfig(
        dataset=args.dataset,
        defense=defense,
        attack=AttackConfig(method=args.attack, budget=args.budget, seed=args.seed),
        train=TrainConfig(epochs=args.epochs, seed=args.seed),
        data_dir=args.data_dir,
        out_dir=args.out,
        eval_cap=args.cap,
        eval_protocol=args.protocol,
        community_eval=community,
        seed=args.seed,
    )


def _require_dataset(args):
    if not args.dataset:
        raise NetwardError("--dataset is required for this command")


def _cmd_train(args) -> int:
    _require_dataset(args)
    g, split, _ = ensure_dataset(args.dataset, Path(args.data_dir), args.seed)
    params = train(g, split, TrainConfig(epochs=args.epochs, seed=args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.dataset}-seed{args.seed}.ckpt"
    save_checkpoint(path, params, g.n)
    acc = accuracy(params, g, split, split.test)
    print(f"trained {args.dataset}: test accuracy {acc:.4f}, checkpoint {path}")
    return 0


def _cmd_attack(args) -> int:
    _require_dataset(args)
    record = run_pipeline(_experiment_config(args, force_undefended=True))
    print(f"attack evaluation written to {record.artifacts['table']}")
    return 0


def _cmd_defend(args) -> int:
    _require_dataset(args)
    g, split, _ = ensure_dataset(args.dataset, Path(args.data_dir), args.seed)
    dm = build_defense(g, split, TrainConfig(epochs=args.epochs, seed=args.seed), _defense_spec(args))
    out = Path(args.out) / f"{args.dataset}-{dm.strategy}-seed{args.seed}"
    save_defended(dm, out)
    print(f"defended model ({dm.strategy}) written to {out}")
    return 0


def _cmd_evaluate(args) -> int:
    _require_dataset(args)
    record = run_pipeline(_experiment_config(args))
    print(f"run complete; table: {record.artifacts['table']}")
    return 0


def _cmd_community(args) -> int:
    _require_dataset(args)
    record = run_pipeline(_experiment_config(args, community=True))
    print(f"community evaluation complete; table: {record.artifacts['table']}")
    return 0


def _cmd_report(args) -> int:
    reports = []
    for path in args.inputs:
        reports.extend(load_full_dump(Path(path)))
    artifacts = emit_report(reports, Path(args.out))
    print(f"table written to {artifacts['table']}")
    return 0


def _cmd_synth_data(args) -> int:
    _require_dataset(args)
    manifest = synthesize_dataset(args.dataset, Path(args.data_dir) / args.dataset, args.seed)
    print(f"stand-in dataset written under {manifest.labels_path.parent}")
    return 0


COMMANDS = {
    "train": _cmd_train,
    "attack": _cmd_attack,
    "defend": _cmd_defend,
    "evaluate": _cmd_evaluate,
    "community": _cmd_community,
    "report": _cmd_report,
    "synth-data": _cmd_synth_data,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args)
        return COMMANDS[args.command](args)
    except NetwardError as e:
        print(f"error: {e}", file=sys.stderr)
        return RUNTIME_EXIT
    except (OSError, json.JSONDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
