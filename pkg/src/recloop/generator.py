"""Autoregressive tag-sequence policy.

One shared linear-softmax layer scores all K tags at every slot from the
feature vector phi = [user features ; prefix multi-hot ; slot one-hot].
Already-emitted tags are masked to probability zero and the remainder
renormalized, so every sequence probability and its gradient are available
in closed form. Sampling applies temperature first, then nucleus (top-p)
filtering; log-probabilities are always the unfiltered t=1 model
probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractError, InvalidInputError, validate_cot

INIT_STD = 0.01
_TOP_P_EPS = 1e-12  # float-sum guard so top_p=1 keeps the full support


@dataclass
class GeneratorParams:
    k: int
    l: int
    w: np.ndarray  # (k, 2k + l)
    bias: np.ndarray  # (k,)

    def copy(self) -> "GeneratorParams":
        return GeneratorParams(self.k, self.l, self.w.copy(), self.bias.copy())


@dataclass(frozen=True)
class SamplingParams:
    n: int = 10
    t: float = 1.0
    top_p: float = 0.9

    def __post_init__(self):
        if self.n < 2:
            raise InvalidInputError("need at least 2 samples")
        if self.t < 0:
            raise InvalidInputError("temperature must be nonnegative")
        if not 0 < self.top_p <= 1:
            raise InvalidInputError("top_p must lie in (0, 1]")


def feature_dim(k: int, l: int) -> int:
    return 2 * k + l


def init_params(k: int, l: int, rng: np.random.Generator) -> GeneratorParams:
    if k < max(l, 2):
        raise InvalidInputError("need k >= 2 and k >= l")
    d = feature_dim(k, l)
    return GeneratorParams(k=k, l=l,
                           w=rng.normal(0.0, INIT_STD, size=(k, d)),
                           bias=rng.normal(0.0, INIT_STD, size=k))


def _phi(features: np.ndarray, prefix, slot: int, k: int, l: int) -> np.ndarray:
    phi = np.zeros(feature_dim(k, l))
    phi[:k] = features
    for tag in prefix:
        phi[k + int(tag)] = 1.0
    phi[2 * k + slot] = 1.0
    return phi


def slot_distribution(params: GeneratorParams, user, prefix, slot: int,
                      t: float = 1.0) -> np.ndarray:
    """Probability vector over tags for one slot given the emitted prefix.

    Prefix tags get probability exactly 0; t=0 collapses to a point mass on
    the max-logit unmasked tag, ties resolved toward the lowest tag id.
    """
    k, l = params.k, params.l
    if not 0 <= slot < l:
        raise ContractError(f"slot {slot} out of range for l={l}")
    if len(prefix) != slot:
        raise ContractError(f"prefix length {len(prefix)} does not match slot {slot}")
    validate_cot(tuple(prefix), k)

    logits = params.w @ _phi(user.features, prefix, slot, k, l) + params.bias
    masked = np.zeros(k, dtype=bool)
    for tag in prefix:
        masked[int(tag)] = True

    if t == 0:
        z = np.where(masked, -np.inf, logits)
        out = np.zeros(k)
        out[int(np.argmax(z))] = 1.0  # argmax takes the first maximum
        return out

    z = np.where(masked, -np.inf, logits / t)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _masked_softmax_rows(z: np.ndarray, masked: np.ndarray) -> np.ndarray:
    z = np.where(masked, -np.inf, z)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _nucleus_pick_rows(probs: np.ndarray, top_p: float, u: np.ndarray) -> np.ndarray:
    """Vectorized nucleus draw: one tag id per row of probs.

    The nucleus is the smallest prefix of tags in descending-probability
    order (probability ties broken toward the lower tag id via stable sort)
    whose cumulative mass reaches top_p; the draw is inverse-CDF on the
    renormalized nucleus using the uniforms u.
    """
    k = probs.shape[1]
    order = np.argsort(-probs, axis=1, kind="stable")
    sorted_p = np.take_along_axis(probs, order, axis=1)
    cum = np.cumsum(sorted_p, axis=1)
    cut = (cum < top_p - _TOP_P_EPS).sum(axis=1)  # first index reaching top_p
    kept = np.where(np.arange(k)[None, :] <= cut[:, None], sorted_p, 0.0)
    cum_kept = np.cumsum(kept, axis=1)
    target = u * kept.sum(axis=1)
    j = np.minimum((cum_kept < target[:, None]).sum(axis=1), cut)
    return np.take_along_axis(order, j[:, None], axis=1)[:, 0]


def _sample_from_uniforms(params: GeneratorParams, features: np.ndarray,
                          uniforms: np.ndarray, t: float, top_p: float) -> np.ndarray:
    """Sample one cot per row of features, spending uniforms[row, slot] per slot."""
    m = features.shape[0]
    k, l = params.k, params.l
    phi = np.zeros((m, feature_dim(k, l)))
    phi[:, :k] = features
    taken = np.zeros((m, k), dtype=bool)
    out = np.zeros((m, l), dtype=np.int64)
    rows = np.arange(m)
    for slot in range(l):
        phi[:, 2 * k + slot] = 1.0
        logits = phi @ params.w.T + params.bias
        probs = _masked_softmax_rows(logits / t, taken)
        chosen = _nucleus_pick_rows(probs, top_p, uniforms[:, slot])
        out[:, slot] = chosen
        taken[rows, chosen] = True
        phi[rows, k + chosen] = 1.0
        phi[:, 2 * k + slot] = 0.0
    return out


def sample_cot(params: GeneratorParams, user, sampling: SamplingParams,
               rng: np.random.Generator):
    """Draw one cot with temperature + nucleus sampling (requires t > 0)."""
    if sampling.t <= 0:
        raise ContractError("sampling needs t > 0; use greedy_cot for deterministic decoding")
    uniforms = rng.random(params.l)[None, :]
    row = _sample_from_uniforms(params, user.features[None, :], uniforms,
                                sampling.t, sampling.top_p)[0]
    return tuple(int(x) for x in row)


def greedy_cot(params: GeneratorParams, user):
    """Slot-by-slot argmax decode at t=1 with no nucleus filter; ties go to
    the lowest tag id. Masked argmax over logits equals argmax over the
    softmax, including exact ties."""
    k, l = params.k, params.l
    phi = _phi(user.features, (), 0, k, l)
    out = []
    for slot in range(l):
        phi[2 * k + slot] = 1.0
        logits = params.w @ phi + params.bias
        for tag in out:
            logits[tag] = -np.inf
        choice = int(np.argmax(logits))
        out.append(choice)
        phi[k + choice] = 1.0
        phi[2 * k + slot] = 0.0
    return tuple(out)


def cot_log_prob(params: GeneratorParams, user, cot) -> float:
    """Exact log-probability of the cot at t=1 with no nucleus filter."""
    k, l = params.k, params.l
    validate_cot(cot, k, l)
    phi = _phi(user.features, (), 0, k, l)
    total = 0.0
    for slot, tag in enumerate(cot):
        phi[2 * k + slot] = 1.0
        logits = params.w @ phi + params.bias
        for prev in cot[:slot]:
            logits[prev] = -np.inf
        zmax = logits.max()
        total += float(logits[tag] - zmax - np.log(np.exp(logits - zmax).sum()))
        phi[k + tag] = 1.0
        phi[2 * k + slot] = 0.0
    return total


def cot_log_prob_grad(params: GeneratorParams, user, cot) -> GeneratorParams:
    """Exact gradient of cot_log_prob with respect to (w, bias).

    Per slot this is the masked-softmax cross-entropy gradient
    (indicator - probability) outer phi; masked tags contribute exactly 0.
    """
    k, l = params.k, params.l
    validate_cot(cot, k, l)
    phi = _phi(user.features, (), 0, k, l)
    gw = np.zeros_like(params.w)
    gb = np.zeros_like(params.bias)
    for slot, tag in enumerate(cot):
        phi[2 * k + slot] = 1.0
        logits = params.w @ phi + params.bias
        for prev in cot[:slot]:
            logits[prev] = -np.inf
        z = logits - logits.max()
        e = np.exp(z)
        grad_z = -e / e.sum()
        grad_z[tag] += 1.0
        gw += np.outer(grad_z, phi)
        gb += grad_z
        phi[k + tag] = 1.0
        phi[2 * k + slot] = 0.0
    return GeneratorParams(k=k, l=l, w=gw, bias=gb)


def _cot_batch_slot_data(params: GeneratorParams, features: np.ndarray,
                         cots: np.ndarray, want_slots: bool = True):
    """Per-slot probabilities and feature rows for a batch of cots.

    Returns (log_probs (m,), probs (m, l, k), phis (m, l, d)); the
    preference-alignment gradient needs every slot's masked softmax, while
    loss-only callers pass want_slots=False to skip storing them.
    """
    m = cots.shape[0]
    k, l = params.k, params.l
    d = feature_dim(k, l)
    phi = np.zeros((m, d))
    phi[:, :k] = features
    taken = np.zeros((m, k), dtype=bool)
    probs = np.zeros((m, l, k)) if want_slots else None
    phis = np.zeros((m, l, d)) if want_slots else None
    log_probs = np.zeros(m)
    rows = np.arange(m)
    for slot in range(l):
        phi[:, 2 * k + slot] = 1.0
        logits = phi @ params.w.T + params.bias
        p = _masked_softmax_rows(logits, taken)
        if want_slots:
            phis[:, slot, :] = phi
            probs[:, slot, :] = p
        chosen = cots[:, slot]
        log_probs += np.log(p[rows, chosen])
        taken[rows, chosen] = True
        phi[rows, k + chosen] = 1.0
        phi[:, 2 * k + slot] = 0.0
    return log_probs, probs, phis


def cot_log_probs_batch(params: GeneratorParams, user, cots) -> np.ndarray:
    """Log-probabilities for several cots of one user in one pass."""
    arr = np.asarray(cots, dtype=np.int64)
    feats = np.broadcast_to(user.features, (arr.shape[0], params.k))
    log_probs, _, _ = _cot_batch_slot_data(params, feats, arr, want_slots=False)
    return log_probs
