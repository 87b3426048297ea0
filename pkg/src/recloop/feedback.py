"""Multiple-sampling feedback: sample N cots per interaction, score each
with the validator, reward the probability mass on the observed label, and
split the samples into one positive (max reward) and N-1 negatives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import STREAM_FEEDBACK, ContractError, Label, substream
from .generator import GeneratorParams, SamplingParams, _sample_from_uniforms
from .validator import ValidatorParams


@dataclass(frozen=True, eq=False)
class FeedbackRecord:
    user_id: int
    item_id: int
    label: Label
    cots: tuple  # N cots, sample order
    rewards: np.ndarray  # (N,), strictly inside (0, 1)
    positive_index: int
    negative_indices: tuple


def feedback_reward(p_t: float, p_f: float, y: Label) -> float:
    """Probability mass the validator puts on the observed label."""
    if abs(p_t + p_f - 1.0) > 1e-9:
        raise ContractError(f"probabilities must sum to 1, got {p_t + p_f}")
    return p_t if y is Label.YES else p_f


def _score_cots(val: ValidatorParams, user, item, cots: np.ndarray, y: Label) -> np.ndarray:
    k = val.k
    n = cots.shape[0]
    h = np.zeros((n, k))
    h[np.arange(n)[:, None], cots] = 1.0
    psi = np.concatenate([
        np.broadcast_to(user.features, (n, k)),
        np.broadcast_to(item.features, (n, k)),
        h,
        h * item.features,
    ], axis=1)
    s_yes = np.exp(psi @ val.w_yes + val.b_yes)
    s_no = np.exp(psi @ val.w_no + val.b_no)
    p_t = s_yes / (s_yes + s_no)
    return p_t if y is Label.YES else 1.0 - p_t


def run_sampling_feedback(gen: GeneratorParams, val: ValidatorParams, user, item,
                          label: Label, sampling: SamplingParams, seed: int,
                          round_key: int = 0) -> FeedbackRecord:
    """Build the feedback record for one interaction.

    The RNG sub-stream is keyed by (round, user, item) and row j of its
    uniform draw drives sample j, so each (user, sample index) pair maps to
    fixed randomness and results do not depend on the order interactions are
    processed in. Duplicate sampled cots are kept; reward ties resolve toward
    the earliest sample.
    """
    if sampling.n < 2:
        raise ContractError("need at least 2 samples to form a preference set")
    n, l = sampling.n, gen.l
    rng = substream(seed, STREAM_FEEDBACK, round_key, user.user_id, item.item_id)
    uniforms = rng.random((n, l))
    cots = _sample_from_uniforms(gen, np.broadcast_to(user.features, (n, gen.k)),
                                 uniforms, sampling.t, sampling.top_p)
    rewards = _score_cots(val, user, item, cots, label)
    positive = int(np.argmax(rewards))  # first maximum on ties
    return FeedbackRecord(
        user_id=user.user_id,
        item_id=item.item_id,
        label=label,
        cots=tuple(tuple(int(t) for t in row) for row in cots),
        rewards=rewards,
        positive_index=positive,
        negative_indices=tuple(j for j in range(n) if j != positive),
    )


def build_feedback_batch(gen: GeneratorParams, val: ValidatorParams, interactions,
                         users, items, sampling: SamplingParams, seed: int,
                         round_key: int = 0) -> list[FeedbackRecord]:
    """One FeedbackRecord per interaction, in input order."""
    if not interactions:
        raise ContractError("feedback batch needs at least one interaction")
    return [
        run_sampling_feedback(gen, val, users[it.user_id], items[it.item_id],
                              it.label, sampling, seed, round_key)
        for it in interactions
    ]


def write_feedback_jsonl(records, path) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps({
                "user_id": rec.user_id,
                "item_id": rec.item_id,
                "label": int(rec.label),
                "cots": [list(c) for c in rec.cots],
                "rewards": [float(r) for r in rec.rewards],
                "positive_index": rec.positive_index,
            }, sort_keys=True, separators=(",", ":")) + "\n")
