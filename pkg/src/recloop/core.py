"""Shared domain types and the seeded-randomness contract.

A preference chain-of-thought (cot) is a fixed-length tuple of distinct tag
ids drawn from a small named vocabulary. This module owns that
representation, the binary click label, text rendering for logs, and the
derivation of independent RNG sub-streams from a run seed, so that any
operation called twice with equal inputs and an equal seed is
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

# Sub-stream tags. Every consumer of randomness derives its generator via
# substream(seed, TAG, ...) so streams never collide or depend on call order.
STREAM_ENV = 0
STREAM_GEN_INIT = 1
STREAM_VAL_INIT = 2
STREAM_FEEDBACK = 3
STREAM_DISTILL = 4
STREAM_CTR_INIT = 5
STREAM_CTR_SHUFFLE = 6
STREAM_ENCODER = 7


class RecloopError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(RecloopError):
    """A value violates a documented domain invariant."""


class ContractError(RecloopError):
    """A caller broke an operation precondition."""


class DegenerateScoreError(RecloopError):
    """Both raw validator scores are zero, so normalization is undefined."""


class UnsupportedOperationError(RecloopError):
    """The operation needs data this dataset does not carry."""


class TrainingDivergenceError(RecloopError):
    """A training loss or gradient became non-finite."""


class ParseError(RecloopError):
    """A data file is malformed."""


class ReferentialError(RecloopError):
    """A record references an id that does not exist."""


class SchemaError(RecloopError):
    """A config document does not match the expected schema."""


class CheckpointError(RecloopError):
    """A checkpoint file is missing or malformed."""


class Label(IntEnum):
    NO = 0
    YES = 1


@dataclass(frozen=True)
class TagVocabulary:
    """Ordered tag names; the tag id of a name is its position."""

    tags: tuple[str, ...]

    def __post_init__(self):
        if len(self.tags) < 2:
            raise InvalidInputError("vocabulary needs at least 2 tags")
        if any(not name for name in self.tags):
            raise InvalidInputError("tag names must be non-empty")
        if len(set(self.tags)) != len(self.tags):
            raise InvalidInputError("tag names must be unique")

    @property
    def k(self) -> int:
        return len(self.tags)

    @classmethod
    def generic(cls, k: int) -> "TagVocabulary":
        width = len(str(max(k - 1, 0)))
        return cls(tuple(f"tag{i:0{width}d}" for i in range(k)))


# A cot is a plain tuple of distinct tag ids; length is fixed per run.
Cot = tuple


def validate_cot(cot, k: int, length: int | None = None) -> None:
    """Raise InvalidInputError unless cot is a distinct id tuple valid for k tags."""
    if length is not None and len(cot) != length:
        raise InvalidInputError(f"cot has length {len(cot)}, expected {length}")
    for tag in cot:
        if not 0 <= int(tag) < k:
            raise InvalidInputError(f"tag id {tag} out of range for k={k}")
    if len(set(cot)) != len(cot):
        raise InvalidInputError(f"cot repeats a tag: {tuple(cot)}")


def cot_render(cot, vocab: TagVocabulary) -> str:
    """Render a cot as log text, e.g. 'prefers: comedy, action'."""
    for tag in cot:
        if not 0 <= int(tag) < vocab.k:
            raise InvalidInputError(f"tag id {tag} out of range for k={vocab.k}")
    return "prefers: " + ", ".join(vocab.tags[int(t)] for t in cot)


def cot_multi_hot(cot, k: int) -> np.ndarray:
    """Length-k vector with 1.0 at each tag id of the cot."""
    out = np.zeros(k)
    for tag in cot:
        if not 0 <= int(tag) < k:
            raise InvalidInputError(f"tag id {tag} out of range for k={k}")
        out[int(tag)] = 1.0
    return out


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, *key); equal inputs give equal streams."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(x) for x in key)]))


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def softplus(x):
    """log(1 + exp(x)) without overflow."""
    x = np.asarray(x, dtype=float)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def logsumexp(x) -> float:
    x = np.asarray(x, dtype=float)
    m = np.max(x)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(x - m).sum()))
