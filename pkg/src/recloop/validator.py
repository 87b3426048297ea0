"""Two-head click scorer over (user, item, cot).

Each head is an exponential-linear score on
psi = [user features ; item features ; cot multi-hot ; multi-hot * item
features]; the heads are normalized against each other to produce the
Yes-probability, mirroring how unnormalized Yes/No token scores would be
renormalized. The elementwise product block lets the scorer reward
agreement between a cot and the target item.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DegenerateScoreError, Label, cot_multi_hot, sigmoid

INIT_STD = 0.01
PROB_EPS = 1e-7  # clamp for all log-losses


@dataclass
class ValidatorParams:
    k: int
    w_yes: np.ndarray  # (4k,)
    w_no: np.ndarray  # (4k,)
    b_yes: float
    b_no: float

    def copy(self) -> "ValidatorParams":
        return ValidatorParams(self.k, self.w_yes.copy(), self.w_no.copy(),
                               self.b_yes, self.b_no)


def feature_dim(k: int) -> int:
    return 4 * k


def init_params(k: int, rng: np.random.Generator) -> ValidatorParams:
    return ValidatorParams(
        k=k,
        w_yes=rng.normal(0.0, INIT_STD, size=4 * k),
        w_no=rng.normal(0.0, INIT_STD, size=4 * k),
        b_yes=float(rng.normal(0.0, INIT_STD)),
        b_no=float(rng.normal(0.0, INIT_STD)),
    )


def psi_features(user, item, cot, k: int) -> np.ndarray:
    h = cot_multi_hot(cot, k)
    return np.concatenate([user.features, item.features, h, h * item.features])


def raw_scores(params: ValidatorParams, user, item, cot) -> tuple[float, float]:
    """Strictly positive unnormalized (yes, no) scores."""
    psi = psi_features(user, item, cot, params.k)
    return (float(np.exp(params.w_yes @ psi + params.b_yes)),
            float(np.exp(params.w_no @ psi + params.b_no)))


def normalize(s_yes: float, s_no: float) -> tuple[float, float]:
    """Normalize raw scores into (p_yes, p_no) summing to 1."""
    if s_yes < 0 or s_no < 0:
        raise DegenerateScoreError("raw scores must be nonnegative")
    total = s_yes + s_no
    if total == 0:
        raise DegenerateScoreError("both raw scores are zero")
    return s_yes / total, s_no / total


def p_yes(params: ValidatorParams, user, item, cot) -> float:
    """Normalized click probability; equals sigmoid((w_yes - w_no) . psi + b_yes - b_no)."""
    return normalize(*raw_scores(params, user, item, cot))[0]


def bce_loss(params: ValidatorParams, user, item, cot, y: Label,
             eps: float = PROB_EPS) -> float:
    p = min(max(p_yes(params, user, item, cot), eps), 1.0 - eps)
    return -(float(y) * np.log(p) + (1.0 - float(y)) * np.log(1.0 - p))


def bce_grad(params: ValidatorParams, user, item, cot, y: Label) -> ValidatorParams:
    """Exact gradient of the binary cross-entropy at (user, item, cot, y).

    The yes-head gradient is (p_yes - y) * psi with bias term (p_yes - y);
    the no-head gradient is its negation.
    """
    psi = psi_features(user, item, cot, params.k)
    delta = float(params.w_yes @ psi - params.w_no @ psi + params.b_yes - params.b_no)
    residual = float(sigmoid(delta)) - float(y)
    return ValidatorParams(
        k=params.k,
        w_yes=residual * psi,
        w_no=-residual * psi,
        b_yes=residual,
        b_no=-residual,
    )


def p_yes_batch(params: ValidatorParams, psi_rows: np.ndarray) -> np.ndarray:
    """Vectorized p_yes for prebuilt psi rows (training and scoring loops)."""
    delta = psi_rows @ (params.w_yes - params.w_no) + (params.b_yes - params.b_no)
    return sigmoid(delta)
