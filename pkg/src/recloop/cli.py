"""Experiment harness.

Subcommands:
  synth        generate a synthetic dataset directory
  train        run the full alternating pipeline plus the CTR arms
  eval         recompute metrics for a finished run from its checkpoints
  export-cots  dump greedy cots for a checkpoint as JSONL

Every subcommand is deterministic given (config, seed); failures exit
nonzero with a single machine-parseable line `error[<category>]: <message>`
on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoints, config as config_mod, env as env_mod
from .core import (
    STREAM_CTR_INIT,
    STREAM_CTR_SHUFFLE,
    STREAM_ENCODER,
    CheckpointError,
    ContractError,
    InvalidInputError,
    Label,
    ParseError,
    RecloopError,
    ReferentialError,
    SchemaError,
    TagVocabulary,
    TrainingDivergenceError,
    UnsupportedOperationError,
    cot_render,
    substream,
)
from .ctr import ctr_scores, ctr_train, init_ctr_params, make_encoder
from .loop import evaluate_state, greedy_cots_by_user, run_alternating
from .metrics import evaluate

METRICS_COLUMNS = ("run", "arm", "iteration", "split", "auc", "acc", "logloss",
                   "mean_reward", "tag_recall", "sdpo_loss", "rectune_loss")

_ERROR_CATEGORIES = (
    (SchemaError, "config"),
    (ParseError, "data"),
    (ReferentialError, "data"),
    (CheckpointError, "io"),
    (TrainingDivergenceError, "train"),
    (UnsupportedOperationError, "unsupported"),
    (ContractError, "invalid-input"),
    (InvalidInputError, "invalid-input"),
)


def _category(exc: Exception) -> str:
    for etype, name in _ERROR_CATEGORIES:
        if isinstance(exc, etype):
            return name
    if isinstance(exc, OSError):
        return "io"
    return "internal"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_metrics_csv(path, rows) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row.get(col)) for col in METRICS_COLUMNS) + "\n")


def append_metrics_csv(path, rows) -> None:
    with open(Path(path), "a", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(",".join(_cell(row.get(col)) for col in METRICS_COLUMNS) + "\n")


def _load_or_synthesize(rc: config_mod.RunConfig):
    if rc.data_dir is not None:
        return env_mod.load_dataset_dir(rc.data_dir)
    return env_mod.make_synthetic(rc.env)


def _apply_overrides(doc: dict, args) -> dict:
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        doc["loop"]["iterations"] = args.iterations
    if getattr(args, "no_align", False):
        doc["loop"]["align_enabled"] = False
    if getattr(args, "no_distill", False):
        doc["distill"]["enabled"] = False
    return doc


def _read_config(args) -> dict:
    if getattr(args, "config", None) is not None:
        doc = config_mod.load_config_file(args.config)
    else:
        doc = config_mod.merge_with_defaults({})
    return _apply_overrides(doc, args)


def _report_row(run_name: str, report) -> dict:
    return {
        "run": run_name,
        "arm": "loop",
        "iteration": report.iteration,
        "split": "valid",
        "auc": report.auc,
        "acc": report.acc,
        "logloss": report.logloss,
        "mean_reward": report.mean_reward,
        "tag_recall": report.tag_recall,
        "sdpo_loss": report.sdpo_loss,
        "rectune_loss": report.rectune_loss,
    }


def train_ctr_arms(rc, data, gen, iteration: int):
    """Train the base (zero cot vector) and cot arms for one generator
    snapshot; both arms share init and shuffle streams so they differ only in
    the injected features. Returns metrics rows for the test split."""
    users, items, interactions = data
    k = len(next(iter(items.values())).features)
    train = [it for it in interactions if it.split == "train"]
    test = [it for it in interactions if it.split == "test"]
    encoder = make_encoder(k, substream(rc.seed, STREAM_ENCODER))
    cots = greedy_cots_by_user(gen, users)
    rows = []
    for arm, arm_cots in (("base", None), ("cot", cots)):
        params = init_ctr_params(users, items, k, substream(rc.seed, STREAM_CTR_INIT, iteration))
        trained, _ = ctr_train(params, train, users, items, encoder, arm_cots,
                               rc.ctr_epochs, rc.ctr_lr,
                               substream(rc.seed, STREAM_CTR_SHUFFLE, iteration))
        scores = ctr_scores(trained, test, users, items, encoder, arm_cots)
        report = evaluate(list(zip(scores, (it.label for it in test))))
        rows.append({
            "run": rc.name, "arm": arm, "iteration": iteration, "split": "test",
            "auc": report.auc, "acc": report.acc, "logloss": report.logloss,
        })
    return rows


def run_training(doc: dict, out_dir) -> Path:
    """Full `train` pipeline; returns the run directory."""
    rc = config_mod.build_run_config(doc)
    users, items, interactions = _load_or_synthesize(rc)

    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "cots").mkdir(parents=True, exist_ok=True)
    config_mod.dump_config(doc, out / "config.json")

    started = time.perf_counter()
    result = run_alternating(interactions, users, items, rc.loop)
    loop_seconds = time.perf_counter() - started

    k = len(next(iter(items.values())).features)
    vocab = TagVocabulary.generic(k)
    rows = []
    for i, report in enumerate(result.reports):
        gen_i = result.generator_history[i]
        checkpoints.save_generator(gen_i, out / "checkpoints" / f"iter_{i}.gen")
        checkpoints.save_validator(result.validator_history[i],
                                   out / "checkpoints" / f"iter_{i}.val")
        cots = greedy_cots_by_user(gen_i, users)
        with open(out / "cots" / f"iter_{i}.jsonl", "w", encoding="utf-8",
                  newline="\n") as fh:
            for uid in sorted(cots):
                fh.write(json.dumps({
                    "user_id": uid,
                    "tag_ids": list(cots[uid]),
                    "text": cot_render(cots[uid], vocab),
                }, sort_keys=True, separators=(",", ":")) + "\n")
        rows.append(_report_row(rc.name, report))
        rows.extend(train_ctr_arms(rc, (users, items, interactions), gen_i, i))

    write_metrics_csv(out / "metrics.csv", rows)
    # Timing goes to stdout only; metrics.csv stays byte-reproducible.
    print(f"run {rc.name}: {len(result.reports)} reports, "
          f"alternating stage {loop_seconds:.1f}s, run dir {out}")
    return out


def _cmd_synth(args) -> int:
    doc = _read_config(args)
    rc = config_mod.build_run_config(doc)
    users, items, interactions = env_mod.make_synthetic(rc.env)
    out = Path(args.out)
    env_mod.write_dataset(out, users, items, interactions)
    manifest = {"seed": rc.seed, "env": doc["env"], "n_interactions": len(interactions)}
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote dataset ({rc.env.n_users} users, {rc.env.n_items} items, "
          f"{len(interactions)} interactions) to {out}")
    return 0


def _cmd_train(args) -> int:
    doc = _read_config(args)
    out_dir = Path(args.out) if args.out else Path("runs") / doc["name"]
    run_training(doc, out_dir)
    return 0


def _eval_rows(run_dir: Path, splits):
    cfg_path = run_dir / "config.json"
    if not cfg_path.exists():
        raise CheckpointError(f"missing checkpoint: {cfg_path}")
    doc = config_mod.load_config_file(cfg_path)
    rc = config_mod.build_run_config(doc)
    users, items, interactions = _load_or_synthesize(rc)
    final = doc["loop"]["iterations"]
    gen = checkpoints.load_generator(run_dir / "checkpoints" / f"iter_{final}.gen")
    val = checkpoints.load_validator(run_dir / "checkpoints" / f"iter_{final}.val")
    rows = []
    for split in splits:
        report, mean_reward, recall = evaluate_state(gen, val, interactions,
                                                     users, items, split=split)
        rows.append({
            "run": rc.name, "arm": "eval", "iteration": final, "split": split,
            "auc": report.auc, "acc": report.acc, "logloss": report.logloss,
            "mean_reward": mean_reward, "tag_recall": recall,
        })
    return rows


def _cmd_eval(args) -> int:
    run_dir = Path(args.run_dir)
    splits = env_mod.SPLITS if args.split == "all" else (args.split,)
    rows = _eval_rows(run_dir, splits)
    for row in rows:
        print(f"split={row['split']} auc={row['auc']:.6f} acc={row['acc']:.6f} "
              f"logloss={row['logloss']:.6f} mean_reward={row['mean_reward']:.6f}")
    append_metrics_csv(run_dir / "metrics.csv", rows)
    return 0


def _cmd_export_cots(args) -> int:
    run_dir = Path(args.run_dir)
    doc = config_mod.load_config_file(run_dir / "config.json")
    rc = config_mod.build_run_config(doc)
    iteration = args.iteration if args.iteration is not None else doc["loop"]["iterations"]
    gen = checkpoints.load_generator(run_dir / "checkpoints" / f"iter_{iteration}.gen")
    users, items, _ = _load_or_synthesize(rc)
    vocab = TagVocabulary.generic(gen.k)
    cots = greedy_cots_by_user(gen, users)
    lines = [
        json.dumps({"user_id": uid, "tag_ids": list(cots[uid]),
                    "text": cot_render(cots[uid], vocab)},
                   sort_keys=True, separators=(",", ":"))
        for uid in sorted(cots)
    ]
    if args.out:
        with open(Path(args.out), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    else:
        for line in lines:
            print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recloop",
                                     description="alternating-feedback training harness")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic dataset directory")
    synth.add_argument("--config", help="JSON config file")
    synth.add_argument("--seed", type=int, help="override the config seed")
    synth.add_argument("--out", required=True, help="output dataset directory")
    synth.set_defaults(func=_cmd_synth)

    train = sub.add_parser("train", help="run the full training pipeline")
    train.add_argument("--config", help="JSON config file")
    train.add_argument("--seed", type=int, help="override the config seed")
    train.add_argument("--iterations", type=int, help="override the iteration count")
    train.add_argument("--no-align", action="store_true",
                       help="disable generator preference alignment")
    train.add_argument("--no-distill", action="store_true",
                       help="disable teacher-oracle initialization")
    train.add_argument("--out", help="run directory (default runs/<name>)")
    train.set_defaults(func=_cmd_train)

    ev = sub.add_parser("eval", help="recompute metrics from stored checkpoints")
    ev.add_argument("run_dir")
    ev.add_argument("--split", default="all",
                    choices=["all", *env_mod.SPLITS], help="which split to score")
    ev.set_defaults(func=_cmd_eval)

    export = sub.add_parser("export-cots", help="dump greedy cots as JSONL")
    export.add_argument("run_dir")
    export.add_argument("--iteration", type=int, help="checkpoint index (default final)")
    export.add_argument("--out", help="output file (default stdout)")
    export.set_defaults(func=_cmd_export_cots)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RecloopError, OSError) as exc:
        print(f"error[{_category(exc)}]: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
