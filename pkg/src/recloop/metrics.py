"""Ranking and calibration metrics for binary click prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, RecloopError

LOGLOSS_EPS = 1e-7


@dataclass(frozen=True)
class MetricsReport:
    auc: float
    acc: float
    logloss: float


class AucUndefinedError(RecloopError):
    """AUC needs both classes; the accuracy and logloss that are still
    computable ride along on the exception."""

    def __init__(self, message: str, acc: float, logloss: float):
        super().__init__(message)
        self.acc = acc
        self.logloss = logloss


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with mid-ranks assigned to ties."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    order = np.argsort(x, kind="stable")
    sx = x[order]
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    boundary[1:] = sx[1:] != sx[:-1]
    group = np.cumsum(boundary) - 1
    starts = np.flatnonzero(boundary)
    ends = np.append(starts[1:], n) - 1
    avg = (starts[group] + ends[group]) / 2.0 + 1.0
    ranks = np.empty(n)
    ranks[order] = avg
    return ranks


def auc_score(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC via average ranks (mid-ranks on ties)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InvalidInputError("AUC needs at least one positive and one negative")
    ranks = average_ranks(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


def accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    """Accuracy at threshold 0.5; a score of exactly 0.5 predicts Yes."""
    predicted = np.asarray(scores, dtype=float) >= 0.5
    return float(np.mean(predicted == (np.asarray(labels, dtype=float) == 1.0)))


def logloss(scores: np.ndarray, labels: np.ndarray, eps: float = LOGLOSS_EPS) -> float:
    p = np.clip(np.asarray(scores, dtype=float), eps, 1.0 - eps)
    y = np.asarray(labels, dtype=float)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def evaluate(scored) -> MetricsReport:
    """Metrics for a list of (score, label) pairs.

    Raises AucUndefinedError when only one class is present; the error still
    carries the accuracy and logloss.
    """
    if not scored:
        raise InvalidInputError("evaluate needs at least one scored example")
    scores = np.array([float(s) for s, _ in scored])
    labels = np.array([float(y) for _, y in scored])
    acc = accuracy(scores, labels)
    ll = logloss(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise AucUndefinedError("AUC undefined: only one class present", acc=acc,
                                logloss=ll)
    return MetricsReport(auc=auc_score(scores, labels), acc=acc, logloss=ll)
