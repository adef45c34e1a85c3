import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sedlab.errors import InvalidInputError
from sedlab.pseudolabel import (
    dp_pseudo_label,
    enumerate_pseudo_label,
    label_count,
    pseudo_label_batch,
    pseudo_label_grid,
)


class TestLabelCount:
    def test_ten_classes_two_concurrent(self):
        # 1 empty + 10 singles + 45 pairs
        assert label_count(10, 2) == 56

    def test_zero_concurrency(self):
        assert label_count(3, 0) == 1

    def test_full_power_set(self):
        assert label_count(5, 5) == 32

    def test_k_above_c_rejected(self):
        with pytest.raises(InvalidInputError):
            label_count(3, 4)


class TestEnumeration:
    def test_marginal_identity_two_classes(self):
        pseudo, enum = enumerate_pseudo_label([0.9, 0.2], k_max=2)
        np.testing.assert_allclose(pseudo, [0.9, 0.2], atol=1e-12)
        assert enum.n_labels == 4

    def test_symmetric_three_class_hand_computation(self):
        # Seven equal-probability labels; each class present in three.
        pseudo, enum = enumerate_pseudo_label([0.5, 0.5, 0.5], k_max=2)
        np.testing.assert_allclose(pseudo, [3 / 7] * 3, atol=1e-12)
        np.testing.assert_allclose(enum.probabilities, 1 / 7, atol=1e-12)

    def test_all_near_zero_posteriors(self):
        pseudo, _ = enumerate_pseudo_label([1e-6, 1e-6, 1e-6], k_max=2)
        assert np.all(pseudo < 1e-5)

    def test_probabilities_normalized(self, rng):
        for _ in range(25):
            c = int(rng.integers(2, 9))
            post = rng.random(c)
            _, enum = enumerate_pseudo_label(post, k_max=min(2, c))
            assert abs(enum.probabilities.sum() - 1.0) < 1e-12

    def test_label_count_matches(self, rng):
        post = rng.random(6)
        _, enum = enumerate_pseudo_label(post, k_max=2)
        assert enum.n_labels == label_count(6, 2)

    def test_marginal_identity_full_k(self, rng):
        for c in (2, 3, 5, 8):
            post = np.clip(rng.random(c), 1e-6, 1 - 1e-6)
            pseudo, _ = enumerate_pseudo_label(post, k_max=c)
            np.testing.assert_allclose(pseudo, post, atol=1e-10)

    def test_too_many_classes_guarded(self, rng):
        with pytest.raises(InvalidInputError):
            enumerate_pseudo_label(rng.random(21), k_max=2)


class TestDpShortcut:
    def test_matches_enumeration_across_class_counts(self, rng):
        for c in range(2, 13):
            for _ in range(50):
                post = rng.random(c)
                expected, _ = enumerate_pseudo_label(post, k_max=2)
                np.testing.assert_allclose(dp_pseudo_label(post), expected, atol=1e-9)

    def test_symmetric_pair(self):
        out = dp_pseudo_label([0.37, 0.37])
        assert abs(out[0] - out[1]) < 1e-14

    def test_extreme_posteriors_stay_bounded(self):
        out = dp_pseudo_label([1.0, 0.0, 0.5, 1.0])
        assert np.all(out >= 0.0) and np.all(out <= 1.0)

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=10))
    @settings(max_examples=60, deadline=None)
    def test_output_in_unit_interval(self, post):
        out = dp_pseudo_label(np.array(post))
        assert np.all(out >= 0.0) and np.all(out <= 1.0)

    @given(st.lists(st.floats(min_value=0.01, max_value=0.99), min_size=2, max_size=8),
           st.randoms(use_true_random=False))
    @settings(max_examples=40, deadline=None)
    def test_permutation_equivariance(self, post, pyrandom):
        post = np.array(post)
        perm = list(range(post.size))
        pyrandom.shuffle(perm)
        perm = np.array(perm)
        direct = dp_pseudo_label(post[perm])
        permuted = dp_pseudo_label(post)[perm]
        np.testing.assert_allclose(direct, permuted, atol=1e-12)


class TestPseudoLabelGrid:
    def test_constant_rows_map_to_constant_rows(self):
        grid = np.tile([0.7, 0.1, 0.4], (25, 1))
        out = pseudo_label_grid(grid)
        assert np.allclose(out.data, out.data[0][None, :])

    def test_framewise_equality_with_enumeration(self, rng):
        grid = rng.random((1000, 10))
        out = pseudo_label_grid(grid)
        for t in rng.choice(1000, size=40, replace=False):
            expected, _ = enumerate_pseudo_label(grid[t], k_max=2)
            np.testing.assert_allclose(out.data[t], expected, atol=1e-9)

    def test_runtime_hundred_frames_ten_classes(self, rng):
        grid = rng.random((100, 10))
        start = time.perf_counter()
        pseudo_label_grid(grid)
        assert time.perf_counter() - start < 0.05

    def test_batch_variant_matches_grid(self, rng):
        batch = rng.random((3, 12, 5))
        stacked = pseudo_label_batch(batch)
        for b in range(3):
            np.testing.assert_allclose(stacked[b], pseudo_label_grid(batch[b]).data, atol=1e-14)
