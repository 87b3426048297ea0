"""Shared test utilities: parameter flattening, finite differences, stubs."""

import numpy as np

from recloop.ctr import CtrModelParams
from recloop.env import ItemProfile, UserProfile
from recloop.generator import GeneratorParams
from recloop.validator import ValidatorParams


def make_user(rng, k, user_id=0, with_latent=False):
    latent = None
    if with_latent:
        latent = rng.dirichlet(np.full(k, 0.3))
    return UserProfile(user_id=user_id, features=rng.uniform(0.05, 0.95, size=k),
                       history=(), latent=latent)


def make_item(rng, k, item_id=0):
    affinity = rng.dirichlet(np.full(k, 0.3))
    return ItemProfile(item_id=item_id, affinity=affinity, features=affinity.copy())


def flatten_generator(params):
    return np.concatenate([params.w.ravel(), params.bias])


def unflatten_generator(vec, k, l):
    d = 2 * k + l
    return GeneratorParams(k=k, l=l, w=vec[:k * d].reshape(k, d).copy(),
                           bias=vec[k * d:].copy())


def flatten_validator(params):
    return np.concatenate([params.w_yes, params.w_no, [params.b_yes, params.b_no]])


def unflatten_validator(vec, k):
    d = 4 * k
    return ValidatorParams(k=k, w_yes=vec[:d].copy(), w_no=vec[d:2 * d].copy(),
                           b_yes=float(vec[2 * d]), b_no=float(vec[2 * d + 1]))


def flatten_ctr(params):
    return np.concatenate([
        params.user_emb.ravel(), params.item_emb.ravel(),
        params.wc1.ravel(), params.bc1, params.wc2.ravel(), params.bc2,
        params.w1.ravel(), params.b1, params.w2, [params.b2],
    ])


def unflatten_ctr(vec, template: CtrModelParams):
    out = template.copy()
    pos = 0
    for name in ("user_emb", "item_emb", "wc1", "bc1", "wc2", "bc2", "w1", "b1", "w2"):
        arr = getattr(template, name)
        nxt = pos + arr.size
        setattr(out, name, vec[pos:nxt].reshape(arr.shape).copy())
        pos = nxt
    out.b2 = float(vec[pos])
    return out


def central_difference(fn, x0, h=1e-5):
    """Per-coordinate central finite differences of a scalar function."""
    grad = np.zeros_like(x0)
    for i in range(len(x0)):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric, floor=1e-6):
    """Largest per-coordinate relative error with a small-denominator guard."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
