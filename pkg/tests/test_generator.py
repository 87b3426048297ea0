import itertools
import math

import numpy as np
import pytest

from recloop.core import ContractError, InvalidInputError, substream
from recloop.generator import (
    GeneratorParams,
    SamplingParams,
    _sample_from_uniforms,
    cot_log_prob,
    cot_log_prob_grad,
    cot_log_probs_batch,
    greedy_cot,
    init_params,
    sample_cot,
    slot_distribution,
)

from _helpers import (
    central_difference,
    flatten_generator,
    make_user,
    max_relative_error,
    unflatten_generator,
)


def zero_params(k, l):
    return GeneratorParams(k=k, l=l, w=np.zeros((k, 2 * k + l)), bias=np.zeros(k))


def random_setup(seed, k=5, l=3, scale=0.5):
    rng = np.random.default_rng(seed)
    params = GeneratorParams(k=k, l=l,
                             w=rng.normal(0, scale, size=(k, 2 * k + l)),
                             bias=rng.normal(0, scale, size=k))
    return params, make_user(rng, k), rng


class TestSlotDistribution:
    def test_uniform_at_zero_params(self):
        params = zero_params(3, 2)
        user = make_user(np.random.default_rng(0), 3)
        np.testing.assert_allclose(slot_distribution(params, user, (), 0),
                                   np.full(3, 1 / 3), atol=1e-15)

    def test_repeat_mask_renormalizes(self):
        params = zero_params(3, 2)
        user = make_user(np.random.default_rng(0), 3)
        dist = slot_distribution(params, user, (1,), 1)
        np.testing.assert_allclose(dist, [0.5, 0.0, 0.5], atol=1e-15)

    def test_t_zero_point_mass_with_tie_to_low_id(self):
        params = zero_params(3, 1)
        params.bias = np.array([0.2, 0.2, 0.1])
        user = make_user(np.random.default_rng(0), 3)
        user.features[:] = 0.0
        assert slot_distribution(params, user, (), 0, t=0).tolist() == [1.0, 0.0, 0.0]

    def test_prefix_slot_mismatch(self):
        params = zero_params(3, 2)
        user = make_user(np.random.default_rng(0), 3)
        with pytest.raises(ContractError):
            slot_distribution(params, user, (0,), 0)

    def test_sums_to_one_and_zero_on_prefix(self):
        for seed in range(20):
            params, user, _ = random_setup(seed)
            dist = slot_distribution(params, user, (2, 0), 2, t=0.7)
            assert abs(dist.sum() - 1.0) < 1e-12
            assert dist[2] == 0.0 and dist[0] == 0.0

    def test_entropy_nondecreasing_in_temperature(self):
        def entropy(p):
            nz = p[p > 0]
            return float(-(nz * np.log(nz)).sum())

        for seed in range(30):
            params, user, rng = random_setup(seed, k=6, l=3)
            ts = np.sort(rng.uniform(0.05, 5.0, size=6))
            ents = [entropy(slot_distribution(params, user, (1,), 1, t=t)) for t in ts]
            for lo, hi in zip(ents, ents[1:]):
                assert hi >= lo - 1e-10


class TestSampleCot:
    def test_nucleus_cut_examples(self):
        # probs [0.5, 0.3, 0.2]: top_p=0.7 keeps {0,1}; top_p=0.9 keeps all three
        probs = np.array([[0.5, 0.3, 0.2]])
        picks_07 = {int(_nucleus_single(probs, 0.7, u)) for u in np.linspace(0.001, 0.999, 97)}
        assert picks_07 == {0, 1}
        picks_09 = {int(_nucleus_single(probs, 0.9, u)) for u in np.linspace(0.001, 0.999, 199)}
        assert picks_09 == {0, 1, 2}

    def test_nucleus_renormalization_boundary(self):
        # with nucleus {0,1} renormalized to [5/8, 3/8], u=0.624 picks 0 and u=0.626 picks 1
        probs = np.array([[0.5, 0.3, 0.2]])
        assert int(_nucleus_single(probs, 0.7, 0.624)) == 0
        assert int(_nucleus_single(probs, 0.7, 0.626)) == 1

    def test_requires_positive_temperature(self):
        params = zero_params(4, 2)
        user = make_user(np.random.default_rng(0), 4)
        with pytest.raises(ContractError):
            sample_cot(params, user, SamplingParams(n=2, t=0.0, top_p=0.9),
                       np.random.default_rng(0))

    def test_valid_distinct_output(self):
        for seed in range(30):
            params, user, rng = random_setup(seed, k=6, l=4)
            cot = sample_cot(params, user, SamplingParams(n=2, t=0.8, top_p=0.6), rng)
            assert len(cot) == 4
            assert len(set(cot)) == 4

    def test_sampled_tags_lie_in_nucleus(self):
        # every sampled tag must belong to the smallest mass >= top_p set
        for seed in range(25):
            params, user, rng = random_setup(seed, k=6, l=1)
            top_p = rng.uniform(0.2, 1.0)
            dist = slot_distribution(params, user, (), 0)
            order = np.argsort(-dist, kind="stable")
            cum = np.cumsum(dist[order])
            cut = int(np.searchsorted(cum, top_p - 1e-12, side="left"))
            nucleus = set(int(t) for t in order[:cut + 1])
            for _ in range(40):
                cot = sample_cot(params, user, SamplingParams(n=2, t=1.0, top_p=top_p), rng)
                assert cot[0] in nucleus

    def test_equal_seed_equal_sample(self):
        params, user, _ = random_setup(3)
        sp = SamplingParams(n=2, t=1.0, top_p=0.9)
        a = sample_cot(params, user, sp, substream(11, 1))
        b = sample_cot(params, user, sp, substream(11, 1))
        assert a == b

    def test_monte_carlo_matches_slot_distribution(self):
        # slot-0 frequencies over 1e5 draws at (t=1, top_p=1) within 0.01
        params, user, _ = random_setup(7, k=6, l=2, scale=0.8)
        n = 100_000
        uniforms = np.random.default_rng(123).random((n, 2))
        cots = _sample_from_uniforms(params, np.broadcast_to(user.features, (n, 6)),
                                     uniforms, 1.0, 1.0)
        freq = np.bincount(cots[:, 0], minlength=6) / n
        exact = slot_distribution(params, user, (), 0)
        assert np.max(np.abs(freq - exact)) < 0.01


def _nucleus_single(probs, top_p, u):
    from recloop.generator import _nucleus_pick_rows
    return _nucleus_pick_rows(probs, top_p, np.array([u]))[0]


class TestGreedyCot:
    def test_uniform_ties_break_ascending(self):
        params = zero_params(3, 2)
        user = make_user(np.random.default_rng(0), 3)
        user.features[:] = 0.0
        assert greedy_cot(params, user) == (0, 1)

    def test_dominant_bias_then_tie(self):
        params = zero_params(3, 2)
        params.bias = np.array([0.0, 5.0, 0.0])
        user = make_user(np.random.default_rng(0), 3)
        user.features[:] = 0.0
        assert greedy_cot(params, user) == (1, 0)

    def test_matches_low_temperature_sampling(self):
        # the t -> 0 limit of nucleus-free sampling is greedy decoding
        for seed in range(100):
            params, user, rng = random_setup(seed, k=5, l=3)
            sp = SamplingParams(n=2, t=1e-6, top_p=1.0)
            assert sample_cot(params, user, sp, rng) == greedy_cot(params, user)


class TestCotLogProb:
    def test_uniform_masked_value(self):
        params = zero_params(3, 2)
        user = make_user(np.random.default_rng(0), 3)
        user.features[:] = 0.0
        expected = math.log(1 / 3) + math.log(1 / 2)
        assert abs(cot_log_prob(params, user, (0, 1)) - expected) < 1e-12

    def test_single_slot_value(self):
        # probs [0.5, 0.3, 0.2] from log-weights; log prob of tag 2 is log 0.2
        params = zero_params(3, 1)
        params.bias = np.log(np.array([0.5, 0.3, 0.2]))
        user = make_user(np.random.default_rng(0), 3)
        user.features[:] = 0.0
        assert abs(cot_log_prob(params, user, (2,)) - math.log(0.2)) < 1e-12

    def test_rejects_repeats(self):
        params = zero_params(4, 2)
        user = make_user(np.random.default_rng(0), 4)
        with pytest.raises(InvalidInputError):
            cot_log_prob(params, user, (1, 1))

    def test_never_positive(self):
        for seed in range(20):
            params, user, _ = random_setup(seed)
            cot = greedy_cot(params, user)
            assert cot_log_prob(params, user, cot) <= 0.0

    def test_probabilities_sum_to_one_k4_l2(self):
        # full enumeration over all 12 ordered pairs
        for seed in range(10):
            rng = np.random.default_rng(seed)
            params = GeneratorParams(k=4, l=2, w=rng.normal(0, 1.0, size=(4, 10)),
                                     bias=rng.normal(0, 1.0, size=4))
            user = make_user(rng, 4)
            total = sum(math.exp(cot_log_prob(params, user, c))
                        for c in itertools.permutations(range(4), 2))
            assert abs(total - 1.0) < 1e-10

    def test_exp_log_prob_matches_sampling_frequency(self):
        # exp(log prob) is the exact sampling probability at t=1, top_p=1
        params, user, _ = random_setup(5, k=4, l=2, scale=0.8)
        n = 100_000
        uniforms = np.random.default_rng(77).random((n, 2))
        cots = _sample_from_uniforms(params, np.broadcast_to(user.features, (n, 4)),
                                     uniforms, 1.0, 1.0)
        seen = {}
        for row in cots:
            seen[tuple(int(x) for x in row)] = seen.get(tuple(int(x) for x in row), 0) + 1
        for cot, count in seen.items():
            assert abs(count / n - math.exp(cot_log_prob(params, user, cot))) < 0.01

    def test_batch_matches_scalar(self):
        params, user, rng = random_setup(9)
        cots = [sample_cot(params, user, SamplingParams(n=2, t=1.0, top_p=1.0), rng)
                for _ in range(8)]
        batch = cot_log_probs_batch(params, user, cots)
        scalar = [cot_log_prob(params, user, c) for c in cots]
        np.testing.assert_allclose(batch, scalar, atol=1e-12)


class TestCotLogProbGrad:
    def test_uniform_single_slot_bias_gradient(self):
        k = 4
        params = zero_params(k, 1)
        user = make_user(np.random.default_rng(0), k)
        grad = cot_log_prob_grad(params, user, (2,))
        expected = -np.full(k, 1 / k)
        expected[2] += 1.0
        np.testing.assert_allclose(grad.bias, expected, atol=1e-15)

    def test_masked_rows_zero_gradient(self):
        params, user, _ = random_setup(1, k=5, l=3)
        cot = (2, 0, 4)
        grad = cot_log_prob_grad(params, user, cot)
        # at slot 1 tag 2 is masked; its row receives no contribution from
        # that slot, checked via the slot-1 one-hot column of w
        slot1_col = 2 * 5 + 1
        assert grad.w[2, slot1_col] == 0.0

    def test_finite_differences_50_instances(self):
        for seed in range(50):
            params, user, rng = random_setup(seed, k=5, l=3)
            cot = tuple(int(t) for t in rng.permutation(5)[:3])
            grad = cot_log_prob_grad(params, user, cot)
            flat = flatten_generator(params)

            def loss(vec):
                return cot_log_prob(unflatten_generator(vec, 5, 3), user, cot)

            fd = central_difference(loss, flat, h=1e-5)
            assert max_relative_error(flatten_generator(grad), fd) < 1e-5


def test_init_params_seeded_and_shaped():
    a = init_params(16, 4, substream(5, 1))
    b = init_params(16, 4, substream(5, 1))
    assert a.w.shape == (16, 36) and a.bias.shape == (16,)
    assert np.array_equal(a.w, b.w) and np.array_equal(a.bias, b.bias)
    assert np.std(a.w) < 0.05  # small-scale initialization
