import numpy as np
import pytest
from hypothesis import given, strategies as st

from phylotomo.errors import ValidationError
from phylotomo.generate import random_tree
from phylotomo.newick import parse_newick, to_newick


def test_writes_source_as_outer_label(quartet):
    assert to_newick(quartet) == "((1,(2,3)))0;"


def test_parse_rooted_binary_newick(quartet):
    # the implicit degree-2 root node is suppressed
    tree, weights = parse_newick("((0,1),(2,3));")
    assert tree == quartet
    assert weights is None


def test_weights_round_trip(quartet):
    w = {e: 0.1 * (i + 1) for i, e in enumerate(quartet.edges)}
    text = to_newick(quartet, w)
    tree, back = parse_newick(text)
    assert tree == quartet
    for (p, c), x in w.items():
        below = quartet.leaves_below(c)
        match = [e for e in tree.edges if tree.leaves_below(e[1]) == below]
        assert back[match[0]] == x


def test_suppressed_node_sums_lengths():
    tree, w = parse_newick("((0:1.5,1:1):0.5,(2:1,3:1):0.25);")
    internal = [e for e in tree.edges if not tree.is_leaf(e[0]) and not tree.is_leaf(e[1])]
    assert len(internal) == 1
    assert w[internal[0]] == pytest.approx(0.75)


@pytest.mark.parametrize(
    "text",
    ["((0,1),(2,3))", "((0,1),(2,x));", "((0,1),(2,));", "((0,1),(2,2));", "((0,1),(2,3);", "(0,(1,2)3);"],
)
def test_rejects_malformed(text):
    with pytest.raises(ValidationError):
        parse_newick(text)


@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_round_trip_property(n, seed):
    tree = random_tree(n, np.random.default_rng(seed))
    assert parse_newick(to_newick(tree))[0] == tree
