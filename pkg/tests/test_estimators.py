from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phylotomo.delays import SampleMatrix, random_discrete_model, sample_delays, uniform_model
from phylotomo.errors import ValidationError
from phylotomo.estimators import (
    DistortedMetric,
    SampleStatistics,
    delta1_hat,
    delta_hat,
    estimated_variance_metric,
    phi_hat,
)
from phylotomo.generate import random_tree
from phylotomo.tree import chord_depth
from phylotomo.oracle import exact_delta, exact_joint, exact_phi, exact_tree_metric


def pair_samples(diffs):
    """Two-leaf sample matrix whose column difference (1 minus 0) is ``diffs``."""
    d = np.asarray(diffs, dtype=float)
    return SampleMatrix((0, 1), np.column_stack([np.zeros_like(d), d]))


def three_leaf(rows):
    return SampleMatrix((0, 1, 2), np.array(rows, dtype=float))


class TestWorkedExamples:
    def test_mean_of_two_point_difference(self):
        assert delta1_hat(pair_samples([0, 2]), 1, 0) == 1

    def test_identical_columns_have_zero_mean(self):
        S = SampleMatrix((0, 1, 2), np.array([[0, 3, 3], [0, 5, 5], [0, 1, 1]], dtype=float))
        assert delta1_hat(S, 1, 2) == 0

    def test_two_point_central_moments(self):
        S = pair_samples([0, 2])
        assert delta_hat(S, 1, 0, 2) == 2
        assert delta_hat(S, 1, 0, 3) == 0
        assert delta_hat(S, 1, 0, 4) == 1

    def test_constant_difference_has_zero_moments(self):
        S = pair_samples([4, 4, 4, 4])
        for j in range(2, 7):
            assert delta_hat(S, 1, 0, j) == 0

    def test_third_leaf_example(self):
        # X = Da-Db = {1,-1}, Yac = {1,0}, Ybc = {0,1}; centred: X {1,-1}, Yac {.5,-.5}, Ybc {-.5,.5}
        # j=2: mean(X * (Yac - Ybc)) = mean({1, 1}) = 1
        S = three_leaf([[1, 0, 0], [0, 1, 0]])
        assert phi_hat(S, 0, 1, 2, 2) == 1

    def test_third_leaf_constant_samples(self):
        S = three_leaf([[2, 1, 5]] * 4)
        for j in range(2, 6):
            assert phi_hat(S, 0, 1, 2, j) == 0

    def test_input_validation(self):
        S = pair_samples([0, 2])
        with pytest.raises(ValidationError):
            delta_hat(S, 1, 1, 2)
        with pytest.raises(ValidationError):
            delta_hat(S, 1, 0, 1)
        with pytest.raises(ValidationError):
            phi_hat(three_leaf([[0, 1, 2], [1, 1, 1]]), 0, 0, 2, 2)


class TestAgainstOracle:
    @pytest.fixture(scope="class")
    @staticmethod
    def instance():
        rng = np.random.default_rng(21)
        tree = random_tree(5, rng)
        model = random_discrete_model(tree, rng)
        return tree, model, sample_delays(model, 100_000, seed=21)

    def test_mean_within_three_se(self, star3):
        S = sample_delays(uniform_model(star3, 1.0), 100_000, seed=1)
        x = S.column(1) - S.column(0)
        se = x.std(ddof=1) / np.sqrt(S.k)
        assert abs(delta1_hat(S, 1, 0) - 1.0) <= 3 * se

    @pytest.mark.parametrize("j", [2, 3, 4])
    def test_central_moments_within_three_se(self, instance, j):
        tree, model, S = instance
        for a, b in [(1, 2), (3, 0), (2, 5)]:
            exact = float(exact_delta(exact_joint(tree, model, (a, b)), a, b, j))
            x = S.column(a) - S.column(b)
            z = (x - x.mean()) ** j
            se = z.std(ddof=1) / np.sqrt(S.k)
            assert abs(delta_hat(S, a, b, j) - exact) <= 3 * se + 1e-12

    def test_third_leaf_j2_matches_path_variance(self, instance):
        tree, model, S = instance
        W = exact_tree_metric(tree, model.moment_weights(2))
        checked = 0
        for a in tree.receivers:
            for b in tree.receivers:
                if a >= b:
                    continue
                below = tree.leaves_below(tree.lca(a, b))
                for c in tree.leaves:
                    if c in below:
                        continue
                    joint = exact_joint(tree, model, (a, b, c))
                    assert exact_phi(joint, a, b, c, 2) == W(a, b)
                    x = S.column(a) - S.column(b)
                    y = (S.column(a) - S.column(c)) - (S.column(b) - S.column(c))
                    z = (x - x.mean()) * (y - y.mean())
                    se = z.std(ddof=1) / np.sqrt(S.k)
                    assert abs(phi_hat(S, a, b, c, 2) - float(W(a, b))) <= 3 * se + 1e-3
                    checked += 1
        assert checked > 0

    def test_unbiased_variance(self, star3):
        model = random_discrete_model(star3, np.random.default_rng(4))
        exact = float(exact_delta(exact_joint(star3, model, (1, 2)), 1, 2, 2))
        runs = np.array(
            [delta_hat(sample_delays(model, 5, seed=s), 1, 2, 2) for s in range(1000)]
        )
        se = runs.std(ddof=1) / np.sqrt(len(runs))
        assert abs(runs.mean() - exact) <= 3 * se


class TestProperties:
    @given(
        st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=40),
        st.floats(-100, 100, allow_nan=False),
    )
    def test_variance_shift_invariant(self, diffs, c):
        a = delta_hat(pair_samples(diffs), 1, 0, 2)
        b = delta_hat(pair_samples(np.asarray(diffs) + c), 1, 0, 2)
        assert b == pytest.approx(a, abs=1e-9 * (1 + abs(c)) ** 2)

    def test_lipschitz_single_replacement(self):
        rng = np.random.default_rng(8)
        worst = -np.inf
        for _ in range(1000):
            k = int(rng.integers(2, 50))
            B = float(rng.uniform(0.1, 5))
            d = rng.uniform(-B, B, size=k)
            d2 = d.copy()
            d2[rng.integers(k)] = rng.uniform(-B, B)
            gap = abs(delta_hat(pair_samples(d), 1, 0, 2) - delta_hat(pair_samples(d2), 1, 0, 2))
            worst = max(worst, gap - 4 * B * B / k)
        assert worst <= 1e-12

    def test_metric_matches_pairwise_estimator(self, balanced16):
        S = sample_delays(uniform_model(balanced16), 3000, seed=6)
        W = estimated_variance_metric(S, 0.01, 1.0)
        for a in balanced16.leaves:
            for b in balanced16.leaves:
                if a != b:
                    assert W(a, b) == pytest.approx(delta_hat(S, a, b, 2), rel=1e-9, abs=1e-12)

    def test_degenerate_metric_near_zero(self):
        S = SampleMatrix((0, 1, 2), np.tile([0.0, 2.0, 3.0], (50, 1)))
        W = estimated_variance_metric(S, 0.1, 1.0)
        assert np.abs(W.values).max() <= 1e-12

    @pytest.fixture(scope="class")
    @staticmethod
    def balanced_errors(balanced16):
        model = uniform_model(balanced16)
        W_hat = estimated_variance_metric(sample_delays(model, 5000, seed=12), 0.01, 1.0)
        W = exact_tree_metric(balanced16, model.moment_weights(2))
        return {
            (a, b): (balanced16.distance(a, b), abs(W_hat(a, b) - W(a, b)))
            for a in balanced16.leaves
            for b in balanced16.leaves
            if a < b
        }

    @pytest.mark.xfail(strict=True, reason="sampling error at k=5000 exceeds f/8 on long pairs")
    def test_accurate_within_twice_chord_depth(self, balanced16, balanced_errors):
        radius = 2 * chord_depth(balanced16)
        worst = max(err for dist, err in balanced_errors.values() if dist <= radius)
        assert worst < (1 / 12) / 8

    def test_accurate_on_sibling_pairs(self, balanced_errors):
        worst = max(err for dist, err in balanced_errors.values() if dist <= 2)
        assert worst < (1 / 12) / 8


class TestSampleStatistics:
    def test_memoised_and_audited(self):
        S = three_leaf([[0, 1, 2], [1, 0, 4], [2, 2, 2]])
        stats = SampleStatistics(S)
        assert stats.delta(0, 1, 2) == delta_hat(S, 0, 1, 2)
        assert stats.phi(0, 1, 2, 3) == phi_hat(S, 0, 1, 2, 3)
        assert stats.queried == {frozenset((0, 1))}
        assert stats.triples == {(0, 1, 2)}


class TestDistortedMetric:
    def test_infinite_entries_allowed(self):
        v = np.array([[0, np.inf], [np.inf, 0]])
        assert DistortedMetric((0, 1), v, 0.1, 1.0)(0, 1) == np.inf

    def test_asymmetric_rejected(self):
        with pytest.raises(ValidationError):
            DistortedMetric((0, 1), np.array([[0, 1], [2, 0]]), 0.1, 1.0)

    def test_exact_metric_is_a_valid_distortion(self, quartet):
        model = random_discrete_model(quartet, np.random.default_rng(2))
        W = exact_tree_metric(quartet, model.moment_weights(2))
        vals = np.array(W.values, dtype=float)
        D = DistortedMetric(W.leaves, vals, 1e-6, 1.0)
        for i, a in enumerate(W.leaves):
            for b in W.leaves[i + 1 :]:
                assert D(a, b) == float(Fraction(W(a, b)))
