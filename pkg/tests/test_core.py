import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from recloop.core import (
    InvalidInputError,
    Label,
    TagVocabulary,
    cot_multi_hot,
    cot_render,
    sigmoid,
    softplus,
    substream,
    validate_cot,
)


class TestTagVocabulary:
    def test_generic_names_unique(self):
        vocab = TagVocabulary.generic(16)
        assert vocab.k == 16
        assert len(set(vocab.tags)) == 16

    def test_rejects_duplicate_names(self):
        with pytest.raises(InvalidInputError):
            TagVocabulary(("a", "a"))

    def test_rejects_empty_name(self):
        with pytest.raises(InvalidInputError):
            TagVocabulary(("a", ""))

    def test_rejects_single_tag(self):
        with pytest.raises(InvalidInputError):
            TagVocabulary(("a",))


class TestCotRender:
    def test_orders_by_sequence(self):
        vocab = TagVocabulary(("action", "comedy", "drama"))
        assert cot_render((1, 0), vocab) == "prefers: comedy, action"

    def test_single_tag(self):
        vocab = TagVocabulary(("a", "b", "c"))
        assert cot_render((2,), vocab) == "prefers: c"

    def test_out_of_range_id(self):
        vocab = TagVocabulary(("a", "b", "c"))
        with pytest.raises(InvalidInputError):
            cot_render((3,), vocab)

    def test_injective_over_all_cots(self):
        # every distinct cot renders to a distinct string for a fixed vocabulary
        vocab = TagVocabulary.generic(4)
        cots = list(itertools.permutations(range(4), 2))
        rendered = {cot_render(c, vocab) for c in cots}
        assert len(rendered) == len(cots)


class TestCotMultiHot:
    def test_basic(self):
        assert cot_multi_hot((0, 2), 4).tolist() == [1.0, 0.0, 1.0, 0.0]

    def test_k2(self):
        assert cot_multi_hot((1,), 2).tolist() == [0.0, 1.0]

    def test_sum_equals_length_over_full_enumeration(self):
        # brute force over every C(K,L)*L! cot at K=4, L=2
        for cot in itertools.permutations(range(4), 2):
            vec = cot_multi_hot(cot, 4)
            assert vec.sum() == 2.0
            assert set(np.flatnonzero(vec)) == set(cot)

    @given(st.lists(st.integers(0, 15), min_size=1, max_size=6, unique=True))
    def test_ones_exactly_at_ids(self, ids):
        vec = cot_multi_hot(tuple(ids), 16)
        assert vec.sum() == len(ids)
        assert all(vec[i] == 1.0 for i in ids)

    def test_out_of_range(self):
        with pytest.raises(InvalidInputError):
            cot_multi_hot((4,), 4)


class TestValidateCot:
    def test_rejects_repeat(self):
        with pytest.raises(InvalidInputError):
            validate_cot((1, 1), 4)

    def test_rejects_wrong_length(self):
        with pytest.raises(InvalidInputError):
            validate_cot((1, 2), 4, length=3)


class TestSubstream:
    def test_same_key_same_stream(self):
        a = substream(7, 1, 2).random(5)
        b = substream(7, 1, 2).random(5)
        assert np.array_equal(a, b)

    def test_different_keys_differ(self):
        a = substream(7, 1, 2).random(5)
        b = substream(7, 1, 3).random(5)
        assert not np.array_equal(a, b)

    def test_key_order_matters(self):
        a = substream(7, 1, 2).random(5)
        b = substream(7, 2, 1).random(5)
        assert not np.array_equal(a, b)


class TestMathHelpers:
    def test_sigmoid_matches_naive_and_is_stable(self):
        x = np.linspace(-30, 30, 201)
        naive = 1.0 / (1.0 + np.exp(-x))
        np.testing.assert_allclose(sigmoid(x), naive, atol=1e-12)
        assert sigmoid(np.array([-1000.0]))[0] == 0.0
        assert sigmoid(np.array([1000.0]))[0] == 1.0

    def test_softplus_stable(self):
        assert softplus(1000.0) == 1000.0
        assert softplus(-1000.0) == 0.0
        np.testing.assert_allclose(softplus(0.0), np.log(2.0), atol=1e-15)


def test_label_values():
    assert int(Label.YES) == 1
    assert int(Label.NO) == 0
    assert Label(1) is Label.YES
