"""Click-through-rate backbone with dense cot features.

Greedy cots are embedded by a frozen random tag table (mean pooled), mapped
through a small trainable connector MLP into the model's feature space, and
concatenated with id embeddings and raw user/item features in front of a
one-hidden-layer backbone. Everything except the tag table trains jointly
under clamped binary cross-entropy; a zero-vector cot path keeps the model
usable without cots (the ablation arm).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, ReferentialError, TrainingDivergenceError, sigmoid
from .metrics import LOGLOSS_EPS

D_ID = 8
D_ENCODE = 32
D_CONNECT_HIDDEN = 16
D_CONNECT_OUT = 8
D_HIDDEN = 32
BATCH_SIZE = 64


@dataclass(frozen=True)
class TagEncoder:
    """Frozen random tag embedding table, (k, D_ENCODE)."""

    table: np.ndarray


def make_encoder(k: int, rng: np.random.Generator, d_encode: int = D_ENCODE) -> TagEncoder:
    return TagEncoder(rng.normal(0.0, 1.0 / np.sqrt(d_encode), size=(k, d_encode)))


def encode_preference(cot, encoder: TagEncoder) -> np.ndarray:
    """Mean of the encoder rows selected by the cot (order-invariant)."""
    k = encoder.table.shape[0]
    ids = [int(t) for t in cot]
    if any(not 0 <= t < k for t in ids):
        raise InvalidInputError(f"tag id out of range for k={k}")
    return encoder.table[ids].mean(axis=0)


@dataclass
class CtrModelParams:
    k: int
    user_index: dict
    item_index: dict
    user_emb: np.ndarray  # (n_users, D_ID)
    item_emb: np.ndarray  # (n_items, D_ID)
    wc1: np.ndarray  # (D_CONNECT_HIDDEN, D_ENCODE)
    bc1: np.ndarray
    wc2: np.ndarray  # (D_CONNECT_OUT, D_CONNECT_HIDDEN)
    bc2: np.ndarray
    w1: np.ndarray  # (D_HIDDEN, input_dim)
    b1: np.ndarray
    w2: np.ndarray  # (D_HIDDEN,)
    b2: float

    def copy(self) -> "CtrModelParams":
        return CtrModelParams(
            self.k, self.user_index, self.item_index,
            self.user_emb.copy(), self.item_emb.copy(),
            self.wc1.copy(), self.bc1.copy(), self.wc2.copy(), self.bc2.copy(),
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2)


def input_dim(k: int) -> int:
    return 2 * D_ID + 2 * k + D_CONNECT_OUT


def init_ctr_params(users, items, k: int, rng: np.random.Generator) -> CtrModelParams:
    user_index = {uid: row for row, uid in enumerate(sorted(users))}
    item_index = {iid: row for row, iid in enumerate(sorted(items))}
    d_in = input_dim(k)
    return CtrModelParams(
        k=k,
        user_index=user_index,
        item_index=item_index,
        user_emb=rng.normal(0.0, 0.05, size=(len(user_index), D_ID)),
        item_emb=rng.normal(0.0, 0.05, size=(len(item_index), D_ID)),
        wc1=rng.normal(0.0, 0.1, size=(D_CONNECT_HIDDEN, D_ENCODE)),
        bc1=np.zeros(D_CONNECT_HIDDEN),
        wc2=rng.normal(0.0, 0.1, size=(D_CONNECT_OUT, D_CONNECT_HIDDEN)),
        bc2=np.zeros(D_CONNECT_OUT),
        w1=rng.normal(0.0, 0.1, size=(D_HIDDEN, d_in)),
        b1=np.zeros(D_HIDDEN),
        w2=rng.normal(0.0, 0.1, size=D_HIDDEN),
        b2=0.0,
    )


def _forward_batch(params: CtrModelParams, urows, irows, f_u, f_i, e_p):
    c_pre = e_p @ params.wc1.T + params.bc1
    c_hid = np.tanh(c_pre)
    connected = c_hid @ params.wc2.T + params.bc2
    x = np.concatenate([params.user_emb[urows], params.item_emb[irows],
                        f_u, f_i, connected], axis=1)
    h_pre = x @ params.w1.T + params.b1
    h = np.maximum(h_pre, 0.0)
    prob = sigmoid(h @ params.w2 + params.b2)
    return prob, (c_hid, x, h_pre, h)


def ctr_forward(params: CtrModelParams, user, item, e_p: np.ndarray) -> float:
    """Click probability for one (user, item, cot encoding) triple."""
    if user.user_id not in params.user_index:
        raise ReferentialError(f"unknown user id {user.user_id}")
    if item.item_id not in params.item_index:
        raise ReferentialError(f"unknown item id {item.item_id}")
    prob, _ = _forward_batch(
        params,
        np.array([params.user_index[user.user_id]]),
        np.array([params.item_index[item.item_id]]),
        user.features[None, :], item.features[None, :], np.asarray(e_p)[None, :])
    return float(prob[0])


def _backward_batch(params, urows, irows, f_u, f_i, e_p, y, prob, cache):
    """Gradients of the mean BCE over the batch, as a params-shaped container."""
    c_hid, x, h_pre, h = cache
    b = len(y)
    k = params.k
    d_logit = (prob - y) / b
    g = params.copy()
    g.user_emb[:] = 0.0
    g.item_emb[:] = 0.0

    g.b2 = float(d_logit.sum())
    g.w2 = d_logit @ h
    d_h = np.outer(d_logit, params.w2)
    d_pre = d_h * (h_pre > 0)
    g.w1 = d_pre.T @ x
    g.b1 = d_pre.sum(axis=0)
    d_x = d_pre @ params.w1

    np.add.at(g.user_emb, urows, d_x[:, :D_ID])
    np.add.at(g.item_emb, irows, d_x[:, D_ID:2 * D_ID])
    d_conn = d_x[:, 2 * D_ID + 2 * k:]
    g.wc2 = d_conn.T @ c_hid
    g.bc2 = d_conn.sum(axis=0)
    d_chid = d_conn @ params.wc2
    d_cpre = d_chid * (1.0 - c_hid ** 2)
    g.wc1 = d_cpre.T @ e_p
    g.bc1 = d_cpre.sum(axis=0)
    return g


def _mean_bce(prob: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(prob, LOGLOSS_EPS, 1.0 - LOGLOSS_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def build_ctr_inputs(params: CtrModelParams, interactions, users, items, encoder,
                     cots_by_user):
    """Row arrays for a batch of interactions.

    cots_by_user=None selects the zero-vector cot path (the base arm).
    """
    urows, irows, f_u, f_i, e_p, y = [], [], [], [], [], []
    zero = np.zeros(encoder.table.shape[1])
    ep_cache = {}
    for it in interactions:
        if it.user_id not in params.user_index:
            raise ReferentialError(f"unknown user id {it.user_id}")
        if it.item_id not in params.item_index:
            raise ReferentialError(f"unknown item id {it.item_id}")
        urows.append(params.user_index[it.user_id])
        irows.append(params.item_index[it.item_id])
        f_u.append(users[it.user_id].features)
        f_i.append(items[it.item_id].features)
        if cots_by_user is None:
            e_p.append(zero)
        else:
            if it.user_id not in ep_cache:
                ep_cache[it.user_id] = encode_preference(cots_by_user[it.user_id], encoder)
            e_p.append(ep_cache[it.user_id])
        y.append(float(it.label))
    return (np.array(urows), np.array(irows), np.stack(f_u), np.stack(f_i),
            np.stack(e_p), np.array(y))


def ctr_train(params: CtrModelParams, interactions, users, items, encoder,
              cots_by_user, epochs: int, lr: float, rng: np.random.Generator):
    """Mini-batch gradient descent on the clamped BCE; the encoder stays frozen.

    Returns (trained params, loss trajectory); the trajectory holds the
    full-data mean loss before training followed by the mean after each epoch.
    """
    if not interactions:
        raise InvalidInputError("ctr training needs a nonempty interaction list")
    urows, irows, f_u, f_i, e_p, y = build_ctr_inputs(
        params, interactions, users, items, encoder, cots_by_user)
    params = params.copy()
    n = len(y)

    def full_loss(epoch):
        prob, _ = _forward_batch(params, urows, irows, f_u, f_i, e_p)
        loss = _mean_bce(prob, y)
        if not math.isfinite(loss):
            raise TrainingDivergenceError(f"non-finite ctr loss at epoch {epoch}")
        return loss

    trajectory = [full_loss(0)]
    for epoch in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, BATCH_SIZE):
            sel = perm[start:start + BATCH_SIZE]
            prob, cache = _forward_batch(params, urows[sel], irows[sel],
                                         f_u[sel], f_i[sel], e_p[sel])
            g = _backward_batch(params, urows[sel], irows[sel], f_u[sel], f_i[sel],
                                e_p[sel], y[sel], prob, cache)
            params.user_emb -= lr * g.user_emb
            params.item_emb -= lr * g.item_emb
            params.wc1 -= lr * g.wc1
            params.bc1 -= lr * g.bc1
            params.wc2 -= lr * g.wc2
            params.bc2 -= lr * g.bc2
            params.w1 -= lr * g.w1
            params.b1 -= lr * g.b1
            params.w2 -= lr * g.w2
            params.b2 -= lr * g.b2
        trajectory.append(full_loss(epoch))
    return params, trajectory


def ctr_scores(params: CtrModelParams, interactions, users, items, encoder,
               cots_by_user) -> np.ndarray:
    """Predicted click probabilities for a list of interactions."""
    urows, irows, f_u, f_i, e_p, _ = build_ctr_inputs(
        params, interactions, users, items, encoder, cots_by_user)
    prob, _ = _forward_batch(params, urows, irows, f_u, f_i, e_p)
    return prob
