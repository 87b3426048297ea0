import numpy as np
import pytest

from recloop.core import Label
from recloop.metrics import (
    AucUndefinedError,
    accuracy,
    auc_score,
    average_ranks,
    evaluate,
    logloss,
)


def pairwise_auc_oracle(scores, labels):
    """O(n^2) comparison count with half credit for ties."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestAuc:
    def test_perfect_separation(self):
        report = evaluate([(0.9, Label.YES), (0.1, Label.NO)])
        assert report.auc == 1.0 and report.acc == 1.0

    def test_all_tied_scores_give_half(self):
        report = evaluate([(0.5, Label.YES), (0.5, Label.NO)])
        assert report.auc == 0.5

    def test_matches_pairwise_oracle_on_200_random_sets(self):
        rng = np.random.default_rng(0)
        for trial in range(200):
            n = int(rng.integers(5, 60))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            if rng.random() < 0.5:
                scores = rng.choice([0.1, 0.3, 0.5, 0.7], size=n)  # tie-heavy
            else:
                scores = rng.random(n)
            fast = auc_score(scores, labels)
            slow = pairwise_auc_oracle(scores, labels)
            assert abs(fast - slow) < 1e-12

    def test_invariant_under_strictly_increasing_transform(self):
        rng = np.random.default_rng(5)
        scores = rng.random(80)
        labels = rng.integers(0, 2, size=80)
        labels[0], labels[1] = 0, 1
        a = auc_score(scores, labels)
        b = auc_score(np.exp(3.0 * scores) + 7.0, labels)
        assert abs(a - b) < 1e-12

    def test_single_class_raises_with_partial_metrics(self):
        with pytest.raises(AucUndefinedError) as err:
            evaluate([(0.8, Label.YES), (0.3, Label.YES)])
        assert err.value.acc == 0.5
        assert err.value.logloss > 0.0


class TestAverageRanks:
    def test_midranks_on_ties(self):
        ranks = average_ranks(np.array([1.0, 2.0, 2.0, 3.0]))
        assert ranks.tolist() == [1.0, 2.5, 2.5, 4.0]


class TestAccuracy:
    def test_half_counts_as_yes(self):
        assert accuracy(np.array([0.5]), np.array([1.0])) == 1.0
        assert accuracy(np.array([0.5]), np.array([0.0])) == 0.0


class TestLogloss:
    def test_clamp_keeps_loss_finite(self):
        value = logloss(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        assert np.isfinite(value)
        assert abs(value - (-np.log(1e-7))) < 1e-6

    def test_matches_direct_formula(self):
        scores = np.array([0.8, 0.2, 0.6])
        labels = np.array([1.0, 0.0, 1.0])
        expected = -np.mean([np.log(0.8), np.log(0.8), np.log(0.6)])
        assert abs(logloss(scores, labels) - expected) < 1e-12
