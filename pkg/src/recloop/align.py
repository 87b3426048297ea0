"""Preference alignment of the generator with a softmax-DPO loss.

For a feedback record with positive cot p and negative set C, writing
ratio(c) = beta * (log pi(c|u) - log ref(c|u)) against a frozen reference
policy, the loss is

    L = -log sigmoid( -log sum_{d in C} exp(ratio(d) - ratio(p)) )
      = softplus( logsumexp_d(ratio(d) - ratio(p)) )

which reduces to the pairwise DPO loss when |C| = 1 and to log(1 + |C|)
when policy equals reference. The gradient follows by the chain rule
through the exact sequence log-probabilities:

    dL = sigmoid(inner) * beta * ( sum_d s_d dlogpi(d) - dlogpi(p) )

with s the softmax of the centered ratios over the negative set. The
reference receives no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ContractError,
    InvalidInputError,
    TrainingDivergenceError,
    logsumexp,
    sigmoid,
    softplus,
    validate_cot,
)
from .feedback import FeedbackRecord
from .generator import GeneratorParams, _cot_batch_slot_data


@dataclass(frozen=True)
class DpoConfig:
    beta_dpo: float = 1.0
    lr_alpha: float = 1e-4
    epochs_per_iteration: int = 1

    def __post_init__(self):
        if self.beta_dpo <= 0:
            raise InvalidInputError("beta_dpo must be positive")
        if self.lr_alpha < 0 or self.epochs_per_iteration < 1:
            raise InvalidInputError("need lr_alpha >= 0 and epochs >= 1")


def _record_cots(record: FeedbackRecord, k: int, l: int) -> np.ndarray:
    if not record.negative_indices:
        raise ContractError("record has no negatives")
    for cot in record.cots:
        validate_cot(cot, k, l)
    return np.asarray(record.cots, dtype=np.int64)


def _loss_from_ratios(x: np.ndarray) -> float:
    return softplus(logsumexp(x))


def _reference_log_probs(reference: GeneratorParams, record: FeedbackRecord,
                         user) -> np.ndarray:
    cots = _record_cots(record, reference.k, reference.l)
    feats = np.broadcast_to(user.features, (cots.shape[0], reference.k))
    lp, _, _ = _cot_batch_slot_data(reference, feats, cots, want_slots=False)
    return lp


def sdpo_loss(policy: GeneratorParams, reference: GeneratorParams,
              record: FeedbackRecord, cfg: DpoConfig, user) -> float:
    """Softmax-DPO loss for one record; strictly positive."""
    cots = _record_cots(record, policy.k, policy.l)
    feats = np.broadcast_to(user.features, (cots.shape[0], policy.k))
    lp_pol, _, _ = _cot_batch_slot_data(policy, feats, cots, want_slots=False)
    lp_ref = _reference_log_probs(reference, record, user)
    ratios = cfg.beta_dpo * (lp_pol - lp_ref)
    return _loss_from_ratios(
        ratios[list(record.negative_indices)] - ratios[record.positive_index])


def sdpo_grad(policy: GeneratorParams, reference: GeneratorParams,
              record: FeedbackRecord, cfg: DpoConfig, user) -> GeneratorParams:
    """Exact loss gradient with GeneratorParams shape."""
    lp_ref = _reference_log_probs(reference, record, user)
    _, grad = _policy_loss_and_grad(policy, record, cfg, user, lp_ref)
    return grad


def _policy_loss_and_grad(policy: GeneratorParams, record: FeedbackRecord,
                          cfg: DpoConfig, user, lp_ref: np.ndarray):
    cots = _record_cots(record, policy.k, policy.l)
    feats = np.broadcast_to(user.features, (cots.shape[0], policy.k))
    lp_pol, probs, phis = _cot_batch_slot_data(policy, feats, cots)
    ratios = cfg.beta_dpo * (lp_pol - lp_ref)
    x = ratios[list(record.negative_indices)] - ratios[record.positive_index]
    inner = logsumexp(x)
    loss = softplus(inner)

    # Per-cot coefficients: softmax weight for negatives, -1 for the positive,
    # all scaled by sigmoid(inner) * beta.
    scale = float(sigmoid(inner)) * cfg.beta_dpo
    coef = np.zeros(len(record.cots))
    shifted = np.exp(x - x.max())
    coef[list(record.negative_indices)] = shifted / shifted.sum()
    coef[record.positive_index] = -1.0
    coef *= scale

    m, l, k = probs.shape
    rows = np.arange(m)
    grad_z = -probs  # (m, l, k): indicator minus probability, per slot
    for slot in range(l):
        grad_z[rows, slot, cots[:, slot]] += 1.0
    grad_z *= coef[:, None, None]
    gw = grad_z.reshape(m * l, k).T @ phis.reshape(m * l, -1)
    gb = grad_z.sum(axis=(0, 1))
    return loss, GeneratorParams(k=policy.k, l=policy.l, w=gw, bias=gb)


def align_generator(policy: GeneratorParams, reference: GeneratorParams,
                    records, users, cfg: DpoConfig):
    """One alignment pass: per-record gradient-descent steps in fixed order.

    Returns (updated params, loss trajectory). Trajectory entry e is the mean
    over epoch e of each record's loss just before its update, so a zero
    learning rate yields a constant trajectory. Reference log-probabilities
    are computed once; the reference is frozen throughout.
    """
    if not records:
        raise ContractError("alignment needs at least one record")
    ref_lps = [_reference_log_probs(reference, rec, users[rec.user_id])
               for rec in records]
    params = policy.copy()
    trajectory = []
    for _ in range(cfg.epochs_per_iteration):
        losses = []
        for rec, lp_ref in zip(records, ref_lps):
            loss, grad = _policy_loss_and_grad(params, rec, cfg,
                                               users[rec.user_id], lp_ref)
            if not (np.isfinite(loss) and np.isfinite(grad.w).all()
                    and np.isfinite(grad.bias).all()):
                raise TrainingDivergenceError(
                    f"non-finite alignment loss on record (user={rec.user_id}, "
                    f"item={rec.item_id})")
            losses.append(loss)
            params.w -= cfg.lr_alpha * grad.w
            params.bias -= cfg.lr_alpha * grad.bias
        trajectory.append(float(np.mean(losses)))
    return params, trajectory
