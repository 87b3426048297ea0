"""Validator fine-tuning on greedy generator output, and the teacher-oracle
initialization of the generator.

Rec-tuning never reads latent preference vectors (labels only); the
distillation initializer never reads labels (latent only). On external data
without latent vectors, distillation is unavailable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    STREAM_DISTILL,
    ContractError,
    InvalidInputError,
    TrainingDivergenceError,
    UnsupportedOperationError,
    substream,
)
from .generator import GeneratorParams, cot_log_prob_grad, greedy_cot
from .validator import PROB_EPS, ValidatorParams, bce_grad, p_yes_batch, psi_features


@dataclass(frozen=True)
class RecTuneConfig:
    lr_beta: float = 1e-2
    epochs: int = 1

    def __post_init__(self):
        if self.lr_beta < 0 or self.epochs < 1:
            raise InvalidInputError("need lr_beta >= 0 and epochs >= 1")


@dataclass(frozen=True)
class DistillConfig:
    fraction: float = 0.05
    lr: float = 1.0
    epochs: int = 300

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise InvalidInputError("fraction must lie in (0, 1]")
        if self.lr < 0 or self.epochs < 1:
            raise InvalidInputError("need lr >= 0 and epochs >= 1")


def build_rectune_dataset(gen: GeneratorParams, interactions, users, items):
    """(user, item, cot, label) tuples, one per interaction, using greedy cots."""
    cot_cache = {}
    dataset = []
    for it in interactions:
        if it.user_id not in cot_cache:
            cot_cache[it.user_id] = greedy_cot(gen, users[it.user_id])
        dataset.append((users[it.user_id], items[it.item_id],
                        cot_cache[it.user_id], it.label))
    return dataset


def _mean_bce(val: ValidatorParams, psi_rows: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(p_yes_batch(val, psi_rows), PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


def rectune_validator(val: ValidatorParams, dataset, cfg: RecTuneConfig):
    """Per-tuple gradient descent on the clamped BCE.

    Returns (updated params, loss trajectory); the trajectory holds the mean
    dataset loss before training followed by the mean after each epoch.
    """
    if not dataset:
        raise ContractError("rec-tuning needs a nonempty dataset")
    params = val.copy()
    psi_rows = np.stack([psi_features(u, i, c, params.k) for u, i, c, _ in dataset])
    labels = np.array([float(y) for _, _, _, y in dataset])
    trajectory = [_mean_bce(params, psi_rows, labels)]
    for _ in range(cfg.epochs):
        for user, item, cot, y in dataset:
            grad = bce_grad(params, user, item, cot, y)
            params.w_yes -= cfg.lr_beta * grad.w_yes
            params.w_no -= cfg.lr_beta * grad.w_no
            params.b_yes -= cfg.lr_beta * grad.b_yes
            params.b_no -= cfg.lr_beta * grad.b_no
        trajectory.append(_mean_bce(params, psi_rows, labels))
        if not math.isfinite(trajectory[-1]):
            raise TrainingDivergenceError("non-finite rec-tuning loss")
    return params, trajectory


def oracle_cot(user, m: int):
    """The m largest-latent tags in descending order; ties toward lower ids."""
    if user.latent is None:
        raise UnsupportedOperationError(
            f"user {user.user_id} has no latent vector; teacher oracle unavailable")
    order = np.argsort(-user.latent, kind="stable")
    return tuple(int(t) for t in order[:m])


def distill_generator(gen: GeneratorParams, users, cfg: DistillConfig,
                      seed: int) -> GeneratorParams:
    """Fit the generator to teacher-oracle cots for a small user fraction.

    Selects ceil(fraction * #users) users uniformly at random, then runs
    per-user gradient ascent on the log-likelihood of each user's oracle cot.
    """
    with_latent = [uid for uid in sorted(users) if users[uid].latent is not None]
    if not with_latent:
        raise UnsupportedOperationError("no users carry latent vectors")
    n_sel = math.ceil(cfg.fraction * len(with_latent))
    rng = substream(seed, STREAM_DISTILL)
    selected = rng.choice(with_latent, size=n_sel, replace=False)

    targets = [(users[int(uid)], oracle_cot(users[int(uid)], gen.l)) for uid in selected]
    params = gen.copy()
    for _ in range(cfg.epochs):
        for user, cot in targets:
            grad = cot_log_prob_grad(params, user, cot)
            params.w += cfg.lr * grad.w
            params.bias += cfg.lr * grad.bias
    return params
