"""Iterative alternating training of the generator and the validator.

Each iteration runs stage 1 (sample feedback with the current pair, align
the generator against a frozen reference copy) and stage 2 (fine-tune the
validator on the aligned generator's greedy cots), then snapshots
validation metrics. Models are carried forward between iterations; report 0
is the untrained baseline taken after optional teacher-oracle
initialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import DpoConfig, align_generator
from .core import (
    STREAM_GEN_INIT,
    STREAM_VAL_INIT,
    InvalidInputError,
    Label,
    RecloopError,
    substream,
)
from .feedback import build_feedback_batch
from .generator import GeneratorParams, SamplingParams, greedy_cot, init_params
from .metrics import evaluate
from .rectune import (
    DistillConfig,
    RecTuneConfig,
    build_rectune_dataset,
    distill_generator,
    oracle_cot,
    rectune_validator,
)
from .validator import ValidatorParams, p_yes_batch, psi_features
from .validator import init_params as init_validator_params

REF_SNAPSHOT = "per-iteration-snapshot"
REF_INITIAL = "initial-generator"


@dataclass(frozen=True)
class LoopConfig:
    iterations: int = 3
    cot_len: int = 4
    sampling: SamplingParams = SamplingParams()
    dpo: DpoConfig = DpoConfig()
    rectune: RecTuneConfig = RecTuneConfig()
    distill: DistillConfig | None = DistillConfig()
    reference_mode: str = REF_SNAPSHOT
    align_enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise InvalidInputError("iterations must be >= 0")
        if self.reference_mode not in (REF_SNAPSHOT, REF_INITIAL):
            raise InvalidInputError(
                f"reference_mode must be {REF_SNAPSHOT!r} or {REF_INITIAL!r}")


@dataclass(frozen=True)
class IterationReport:
    iteration: int
    auc: float
    acc: float
    logloss: float
    mean_reward: float
    tag_recall: float | None
    sdpo_loss: float | None
    rectune_loss: float | None


@dataclass
class AlternatingResult:
    generator: GeneratorParams
    validator: ValidatorParams
    reports: list
    generator_history: list  # entry i is the generator behind reports[i]
    validator_history: list


def greedy_cots_by_user(gen: GeneratorParams, users) -> dict:
    return {uid: greedy_cot(gen, users[uid]) for uid in sorted(users)}


def evaluate_state(gen: GeneratorParams, val: ValidatorParams, interactions,
                   users, items, split: str = "valid"):
    """Validator metrics, mean greedy-cot reward on a split, and (when latent
    vectors exist) the mean overlap of greedy cots with the oracle tags."""
    cots = greedy_cots_by_user(gen, users)
    subset = [it for it in interactions if it.split == split]
    if not subset:
        raise InvalidInputError(f"no interactions in split {split!r}")
    psi_rows = np.stack([
        psi_features(users[it.user_id], items[it.item_id], cots[it.user_id], gen.k)
        for it in subset
    ])
    scores = p_yes_batch(val, psi_rows)
    scored = list(zip(scores, (it.label for it in subset)))
    rewards = [s if it.label is Label.YES else 1.0 - s
               for s, it in zip(scores, subset)]
    report = evaluate(scored)

    with_latent = [uid for uid in sorted(users) if users[uid].latent is not None]
    recall = None
    if with_latent:
        l = gen.l
        overlaps = [
            len(set(cots[uid]) & set(oracle_cot(users[uid], l))) / l
            for uid in with_latent
        ]
        recall = float(np.mean(overlaps))
    return report, float(np.mean(rewards)), recall


def _report(iteration, gen, val, interactions, users, items,
            sdpo_loss=None, rectune_loss=None) -> IterationReport:
    metrics, mean_reward, recall = evaluate_state(gen, val, interactions, users, items)
    return IterationReport(
        iteration=iteration,
        auc=metrics.auc,
        acc=metrics.acc,
        logloss=metrics.logloss,
        mean_reward=mean_reward,
        tag_recall=recall,
        sdpo_loss=sdpo_loss,
        rectune_loss=rectune_loss,
    )


def run_iteration(gen: GeneratorParams, val: ValidatorParams, interactions,
                  users, items, cfg: LoopConfig, reference: GeneratorParams,
                  iteration: int):
    """One alternating round; returns (gen', val', report).

    Stage 2 builds its dataset from the stage-1 output, never the incoming
    generator.
    """
    train = [it for it in interactions if it.split == "train"]
    sdpo_loss = None
    try:
        if cfg.align_enabled:
            records = build_feedback_batch(gen, val, train, users, items,
                                           cfg.sampling, cfg.seed, round_key=iteration)
            gen, sdpo_traj = align_generator(gen, reference, records, users, cfg.dpo)
            sdpo_loss = sdpo_traj[-1]
    except RecloopError as exc:
        raise type(exc)(f"iteration {iteration}, stage 1: {exc}") from exc
    try:
        dataset = build_rectune_dataset(gen, train, users, items)
        val, rectune_traj = rectune_validator(val, dataset, cfg.rectune)
    except RecloopError as exc:
        raise type(exc)(f"iteration {iteration}, stage 2: {exc}") from exc
    report = _report(iteration, gen, val, interactions, users, items,
                     sdpo_loss=sdpo_loss, rectune_loss=rectune_traj[-1])
    return gen, val, report


def run_alternating(interactions, users, items, cfg: LoopConfig) -> AlternatingResult:
    """Full alternating run: seeded initialization, optional teacher-oracle
    distillation, then cfg.iterations rounds. Reports hold the baseline at
    index 0 followed by one entry per round."""
    if not interactions or not users or not items:
        raise InvalidInputError("dataset must contain users, items and interactions")
    k = len(next(iter(items.values())).features)
    gen = init_params(k, cfg.cot_len, substream(cfg.seed, STREAM_GEN_INIT))
    val = init_validator_params(k, substream(cfg.seed, STREAM_VAL_INIT))
    if cfg.distill is not None:
        gen = distill_generator(gen, users, cfg.distill, cfg.seed)
    initial_reference = gen.copy()

    reports = [_report(0, gen, val, interactions, users, items)]
    gen_history = [gen.copy()]
    val_history = [val.copy()]
    for iteration in range(1, cfg.iterations + 1):
        reference = gen.copy() if cfg.reference_mode == REF_SNAPSHOT else initial_reference
        gen, val, report = run_iteration(gen, val, interactions, users, items,
                                         cfg, reference, iteration)
        reports.append(report)
        gen_history.append(gen.copy())
        val_history.append(val.copy())
    return AlternatingResult(
        generator=gen,
        validator=val,
        reports=reports,
        generator_history=gen_history,
        validator_history=val_history,
    )
