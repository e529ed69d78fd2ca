import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phylotomo.errors import IncompatibleBipartitionsError, ValidationError
from phylotomo.generate import balanced_tree, caterpillar_tree, random_tree, star_tree
from phylotomo.tree import (
    Bipartition,
    RoutingTree,
    bipartitions_of,
    chord_depth,
    closest_leaf_above,
    common_ancestor,
    edge_chord_depths,
    path_edges,
    tree_from_bipartitions,
)

from conftest import brute_paths, random_trees


class TestValidation:
    def test_rejects_degree_two_node(self):
        with pytest.raises(ValidationError, match="degree 2"):
            RoutingTree([(0, 3), (3, 4), (4, 1), (4, 2)])

    def test_rejects_internal_root(self):
        with pytest.raises(ValidationError, match="must be a leaf"):
            RoutingTree([(0, 1), (0, 2), (0, 3)])

    def test_rejects_cycle(self):
        with pytest.raises(ValidationError):
            RoutingTree([(0, 3), (3, 1), (3, 2), (1, 2)])

    def test_rejects_disconnected(self):
        with pytest.raises(ValidationError):
            RoutingTree([(0, 3), (3, 1), (3, 2), (5, 6), (6, 7)])

    def test_rejects_non_integer_ids(self):
        with pytest.raises(ValidationError):
            RoutingTree([(0, "a"), ("a", 1), ("a", 2)])

    def test_edges_point_away_from_source(self, balanced16):
        for p, c in balanced16.edges:
            assert balanced16.parent(c) == p
        assert balanced16.edges[0][0] == 0


class TestPaths:
    def test_star_path(self, star3):
        assert path_edges(star3, 1, 2) == ((1, 3), (3, 2))

    def test_quartet_path_crosses_internal_edge(self, quartet):
        p = path_edges(quartet, 1, 2)
        assert len(p) == 3 and (4, 5) in p

    def test_unknown_leaf(self, star3):
        with pytest.raises(ValidationError):
            path_edges(star3, 1, 99)
        with pytest.raises(ValidationError):
            path_edges(star3, 1, 3)  # internal node, not a leaf

    def test_lengths_match_bfs(self):
        tree = next(random_trees(1, 20, 20, seed=4))
        dist = brute_paths(tree)
        depth = chord_depth(tree)
        for a, b in combinations(tree.leaves, 2):
            p = path_edges(tree, a, b)
            assert len(p) == dist[a][b]
            assert p[0][0] == a and p[-1][1] == b
            for (x, y), (u, v) in zip(p, p[1:]):
                assert y == u
        assert depth <= max(dist[a][b] for a, b in combinations(tree.leaves, 2))

    def test_path_splits_at_common_ancestor(self):
        for tree in random_trees(20, 3, 15, seed=1):
            for a, b in combinations(tree.receivers, 2):
                g = common_ancestor(tree, a, b)
                whole = tree.path_nodes(a, b)
                assert whole == tree.path_nodes(a, g) + tree.path_nodes(g, b)[1:]


class TestCommonAncestor:
    def test_star(self, star3):
        assert common_ancestor(star3, 1, 2) == 3

    def test_caterpillar(self, caterpillar5):
        # spine 6-7-8-9; receiver 1 hangs off 6, receiver 3 off 8
        assert common_ancestor(caterpillar5, 1, 3) == 6
        assert common_ancestor(caterpillar5, 3, 5) == 8

    def test_root_rejected(self, star3):
        with pytest.raises(ValidationError):
            common_ancestor(star3, 0, 1)

    def test_matches_path_intersection(self):
        for tree in random_trees(25, 3, 20, seed=2):
            for a, b in combinations(tree.receivers, 2):
                common = (
                    set(tree.path_nodes(a, b))
                    & set(tree.path_nodes(0, a))
                    & set(tree.path_nodes(0, b))
                )
                assert common == {common_ancestor(tree, a, b)}


def brute_chord_depth(tree):
    dist = brute_paths(tree)
    best = {}
    for a, b in combinations(tree.leaves, 2):
        for e in path_edges(tree, a, b):
            key = tree.edge_key(*e)
            best[key] = min(best.get(key, math.inf), dist[a][b])
    return best


class TestChordDepth:
    def test_star(self, star3):
        assert chord_depth(star3) == 2

    def test_balanced16(self, balanced16):
        assert chord_depth(balanced16) == 5
        assert chord_depth(balanced16) <= math.ceil(math.log2(17)) + 1

    def test_matches_exhaustive_scan(self):
        for tree in random_trees(30, 2, 30, seed=3):
            assert edge_chord_depths(tree) == brute_chord_depth(tree)

    @pytest.mark.parametrize("shape", ["balanced", "caterpillar", "random", "star"])
    def test_logarithmic_bound(self, shape):
        # the bound that holds for every tree with internal degree >= 3
        rng = np.random.default_rng(5)
        for n in range(2, 70, 3):
            tree = {
                "balanced": balanced_tree,
                "caterpillar": caterpillar_tree,
                "star": star_tree,
            }.get(shape, lambda n: random_tree(n, rng))(n)
            N = len(tree.leaves)
            assert chord_depth(tree) <= 2 * math.log2(N) - 1 + 1e-12

    def test_plain_log_n_bound_is_false(self, star3, balanced16):
        # documented counterexamples to the tighter log2(n) claim
        assert chord_depth(star3) > math.log2(2)
        assert chord_depth(balanced16) > math.log2(16)


class TestBipartitions:
    def test_star(self, star3):
        parts = bipartitions_of(star3)
        assert len(parts) == 3
        assert all(p.is_trivial for p in parts)

    def test_quartet(self, quartet):
        internal = [p for p in bipartitions_of(quartet) if not p.is_trivial]
        assert internal == [Bipartition(frozenset({0, 1}), frozenset({2, 3}))]

    def test_unordered_equality(self):
        assert Bipartition(frozenset({2, 3}), frozenset({0, 1})) == Bipartition(
            frozenset({0, 1}), frozenset({2, 3})
        )

    def test_overlap_rejected(self):
        with pytest.raises(ValidationError):
            Bipartition(frozenset({0, 1}), frozenset({1, 2}))

    def test_one_split_per_edge(self):
        for tree in random_trees(20, 2, 30, seed=6):
            parts = bipartitions_of(tree)
            assert len(parts) == len(tree.edges)
            for p, c in tree.edges:
                below = tree.leaves_below(c)
                assert Bipartition.from_side(below, tree.leaves) in parts

    def test_round_trip(self):
        for tree in random_trees(100, 2, 63, seed=7):
            rebuilt = tree_from_bipartitions(tree.leaves, bipartitions_of(tree))
            assert rebuilt == tree
            assert bipartitions_of(rebuilt) == bipartitions_of(tree)

    def test_quartet_from_split(self, quartet):
        t = tree_from_bipartitions([0, 1, 2, 3], {Bipartition(frozenset({0, 1}), frozenset({2, 3}))})
        assert t == quartet

    def test_empty_gives_star(self):
        t = tree_from_bipartitions(range(6), set())
        assert t == star_tree(5)
        assert len(t.internal_nodes) == 1

    def test_incompatible_named(self):
        a = Bipartition.from_side({1, 2}, range(5))
        b = Bipartition.from_side({2, 3}, range(5))
        with pytest.raises(IncompatibleBipartitionsError) as info:
            tree_from_bipartitions(range(5), {a, b})
        assert set(info.value.pair) == {a, b}

    @given(st.integers(2, 40), st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, n, seed):
        tree = random_tree(n, np.random.default_rng(seed))
        assert tree_from_bipartitions(tree.leaves, bipartitions_of(tree)) == tree


class TestClosestLeafAbove:
    def test_three_leaves_gives_source(self, star3):
        assert closest_leaf_above(star3, 1, 2) == 0

    def test_sibling_on_source_side(self, caterpillar5):
        # receivers 3 and 5 meet at spine node 8; receiver 2 hangs off spine node 7
        assert closest_leaf_above(caterpillar5, 3, 5) == 2

    def test_tie_goes_to_smallest_id(self):
        # 0, 1 and 2 are all two steps from the pair's ancestor 11
        t = RoutingTree([(0, 10), (10, 2), (10, 1), (10, 11), (11, 3), (11, 4)])
        assert closest_leaf_above(t, 3, 4) == 0
        t = RoutingTree([(0, 9), (9, 5), (9, 10), (10, 2), (10, 1), (10, 11), (11, 3), (11, 4)])
        assert closest_leaf_above(t, 3, 4) == 1

    def test_exhaustive_scan(self):
        for tree in random_trees(20, 3, 20, seed=8):
            dist = brute_paths(tree)
            for a, b in combinations(tree.receivers, 2):
                g = common_ancestor(tree, a, b)
                cands = [c for c in tree.leaves if c not in tree.leaves_below(g)]
                best = min(cands, key=lambda c: (dist[g][c], c))
                assert closest_leaf_above(tree, a, b) == best
