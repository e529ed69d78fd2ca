from fractions import Fraction

import numpy as np
import pytest

from conftest import random_trees
from phylotomo.delays import (
    DelayModel,
    DiscreteDelay,
    SampleMatrix,
    random_discrete_model,
    sample_delays,
    uniform_model,
)
from phylotomo.errors import GuardError, ValidationError
from phylotomo.estimators import delta_hat
from phylotomo.generate import balanced_tree, caterpillar_tree
from phylotomo.oracle import (
    GUARD,
    ExactStatistics,
    LemmaReport,
    check_lemma_identities,
    exact_delta,
    exact_joint,
    exact_phi,
    exact_tree_metric,
    random_instance,
)
from phylotomo.tree import RoutingTree

HALF = Fraction(1, 2)


def convolve(dists):
    """Law of a sum of independent discrete delays, by direct convolution."""
    out = {0: Fraction(1)}
    for d in dists:
        nxt = {}
        for x, p in out.items():
            for v, q in zip(d.values, d.probs):
                nxt[x + v] = nxt.get(x + v, 0) + p * q
        out = nxt
    return {x: p for x, p in out.items() if p}


class TestJoint:
    def test_single_edge(self):
        tree = RoutingTree([(0, 1)])
        model = DelayModel(tree, {(0, 1): DiscreteDelay((0, 1), (HALF, HALF))}, 1, 0)
        joint = exact_joint(tree, model)
        assert joint.support == (((0, 0), HALF), ((0, 1), HALF))

    def test_star_total_probability(self, star3):
        d = DiscreteDelay((0, 1), (HALF, HALF))
        joint = exact_joint(star3, DelayModel(star3, {e: d for e in star3.edges}, 1, 0))
        assert len(joint.support) <= 8
        assert joint.total == 1

    def test_marginals_match_convolutions(self):
        rng = np.random.default_rng(0)
        for tree in random_trees(10, 2, 6, seed=0):
            model = random_discrete_model(tree, rng)
            joint = exact_joint(tree, model)
            for a in tree.receivers:
                path = [model.dists[(p, c)] for p, c in tree.edges if a in tree.leaves_below(c)]
                marginal = {}
                i = joint.index(a)
                for vec, p in joint.support:
                    marginal[vec[i]] = marginal.get(vec[i], 0) + p
                assert marginal == convolve(path)

    def test_marginalised_joint_matches_full(self):
        rng = np.random.default_rng(1)
        tree = balanced_tree(4)
        model = random_discrete_model(tree, rng)
        full = exact_joint(tree, model)
        pair = exact_joint(tree, model, (1, 3))
        for j in (2, 3, 4):
            assert exact_delta(full, 1, 3, j) == exact_delta(pair, 1, 3, j)

    def test_guard_refuses_large_support(self):
        tree = balanced_tree(64)
        d = DiscreteDelay((0, 1, 2), (Fraction(1, 3),) * 3)
        model = DelayModel(tree, {e: d for e in tree.edges}, 2, 0)
        assert 3 ** len(tree.edges) > GUARD
        with pytest.raises(GuardError):
            exact_joint(tree, model)
        # two leaves only need the edges on their root paths
        assert exact_joint(tree, model, (1, 2)).total == 1

    def test_requires_discrete(self, star3):
        with pytest.raises(ValidationError):
            exact_joint(star3, uniform_model(star3))


class TestMoments:
    def test_degenerate_model_zero(self, quartet):
        d = DiscreteDelay((2,), (1,))
        joint = exact_joint(quartet, DelayModel(quartet, {e: d for e in quartet.edges}, 2, 0))
        for j in range(2, 6):
            assert exact_delta(joint, 1, 2, j) == 0
            assert exact_phi(joint, 1, 2, 0, j) == 0

    def test_variance_is_path_sum(self):
        rng = np.random.default_rng(2)
        for tree in random_trees(20, 2, 6, seed=2):
            model = random_discrete_model(tree, rng)
            W = exact_tree_metric(tree, model.moment_weights(2))
            for a in tree.leaves:
                for b in tree.leaves:
                    if a < b:
                        joint = exact_joint(tree, model, (a, b))
                        assert exact_delta(joint, a, b, 2) == W(a, b)

    def test_third_order_sign(self, star3):
        skew = DiscreteDelay((0, 3), (Fraction(4, 5), Fraction(1, 5)))
        other = DiscreteDelay((0, 1, 3), (HALF, Fraction(3, 10), Fraction(1, 5)))
        model = DelayModel(star3, {(0, 3): skew, (3, 1): skew, (3, 2): other}, 3, 0)
        joint = exact_joint(star3, model, (1, 2))
        assert exact_delta(joint, 1, 2, 3) == skew.central_moment(3) - other.central_moment(3)

    def test_monte_carlo_envelope_shrinks(self):
        rng = np.random.default_rng(3)
        tree = balanced_tree(4)
        model = random_discrete_model(tree, rng)
        S = sample_delays(model, 100_000, seed=3)
        for j in (2, 3, 4):
            exact = float(exact_delta(exact_joint(tree, model, (1, 4)), 1, 4, j))
            for k in (1000, 10_000, 100_000):
                part = SampleMatrix(S.leaves, S.values[:k])
                x = part.column(1) - part.column(4)
                se = ((x - x.mean()) ** j).std(ddof=1) / np.sqrt(k)
                assert abs(delta_hat(part, 1, 4, j) - exact) <= 3 * se + 1e-12


class TestTreeMetric:
    def test_zero_weights(self, balanced16):
        W = exact_tree_metric(balanced16, {e: 0 for e in balanced16.edges})
        assert not np.any(np.asarray(W.values, dtype=float))

    def test_triangle_inequality(self):
        rng = np.random.default_rng(4)
        for tree in random_trees(20, 3, 15, seed=4):
            W = exact_tree_metric(tree, {e: float(rng.uniform(0.1, 2)) for e in tree.edges})
            L = tree.leaves
            for a in L:
                for b in L:
                    for c in L:
                        assert W(a, c) <= W(a, b) + W(b, c) + 1e-12

    def test_missing_weight(self, quartet):
        with pytest.raises(ValidationError):
            exact_tree_metric(quartet, {quartet.edges[0]: 1})


class TestLemmaChecks:
    def test_random_asymmetric_instance(self):
        rng = np.random.default_rng(5)
        tree = next(random_trees(1, 4, 4, seed=5))
        model = random_discrete_model(tree, rng)
        report = check_lemma_identities(tree, model, 5)
        assert report.max_residual == 0
        assert report.pair_checks > 0 and report.third_leaf_checks > 0

    def test_symmetric_model_odd_orders_zero(self):
        tree = balanced_tree(4)
        d = DiscreteDelay((0, 1, 2), (Fraction(1, 4), HALF, Fraction(1, 4)))
        model = DelayModel(tree, {e: d for e in tree.edges}, 2, 0)
        stats = ExactStatistics(tree, model)
        for j in (3, 5):
            for a in tree.receivers:
                for b in tree.leaves:
                    if a != b:
                        assert stats.delta(a, b, j) == 0
        assert check_lemma_identities(tree, model, 5).max_residual == 0

    def test_third_leaf_independent_of_choice(self):
        # a caterpillar has several admissible third leaves for deep pairs
        tree = caterpillar_tree(5)
        model = random_discrete_model(tree, np.random.default_rng(6), max_support=2)
        report = check_lemma_identities(tree, model, 4)
        assert report.third_leaf_spread == 0 and report.third_leaf_residual == 0

    def test_report_merge_and_json(self):
        a = LemmaReport(Fraction(1, 10), 0, 0, 3, 4, 1)
        b = LemmaReport(0, Fraction(1, 5), 0, 1, 1, 1)
        m = a.merge(b)
        assert (m.max_residual, m.pair_checks, m.instances) == (Fraction(1, 5), 4, 2)
        rows = m.to_dict()
        assert {r["identity"] for r in rows} == {
            "pair_moment", "third_leaf_moment", "third_leaf_choice_spread"
        }

    def test_random_instances_within_limits(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            tree, model = random_instance(rng, max_receivers=6, max_support=3)
            assert tree.n_receivers <= 6
            assert max(len(d.values) for d in model.dists.values()) <= 3
