"""Routing-tree generators used by tests, sweeps and the CLI.

Receivers get ids ``1..n``; internal nodes get ids above ``n``.
"""

from __future__ import annotations

from itertools import count

import numpy as np

from .errors import ValidationError
from .tree import RoutingTree

SHAPES = ("balanced", "caterpillar", "random", "star")


def _need(n: int, least: int = 2):
    if n < least:
        raise ValidationError(f"need at least {least} receivers, got {n}")


def star_tree(n: int) -> RoutingTree:
    _need(n)
    hub = n + 1
    return RoutingTree([(0, hub)] + [(hub, i) for i in range(1, n + 1)])


def balanced_tree(n: int) -> RoutingTree:
    """Source above a (nearly) complete binary tree on ``n`` receivers."""
    _need(n)
    ids = count(n + 1)
    edges = []

    def build(group):
        if len(group) == 1:
            return group[0]
        half = (len(group) + 1) // 2
        node = next(ids)
        for part in (group[:half], group[half:]):
            edges.append((node, build(part)))
        return node

    edges.append((0, build(list(range(1, n + 1)))))
    return RoutingTree(edges)


def caterpillar_tree(n: int) -> RoutingTree:
    """Spine of internal nodes leaving the source, one receiver per spine node."""
    _need(n)
    spine = list(range(n + 1, 2 * n))
    edges = [(0, spine[0])]
    for i, x in enumerate(spine, start=1):
        edges.append((x, i))
        if i < len(spine):
            edges.append((x, spine[i]))
    edges.append((spine[-1], n))
    return RoutingTree(edges)


def random_tree(n: int, rng: np.random.Generator, multifurcation: float = 0.25) -> RoutingTree:
    """Random tree by sequential leaf insertion.

    Each new receiver subdivides a uniformly chosen edge or, with probability
    ``multifurcation``, attaches to an existing internal node.
    """
    _need(n)
    ids = count(n + 1)
    hub = next(ids)
    edges = [(0, hub), (hub, 1), (hub, 2)]
    internal = [hub]
    for leaf in range(3, n + 1):
        if rng.random() < multifurcation:
            edges.append((internal[rng.integers(len(internal))], leaf))
        else:
            u, v = edges.pop(int(rng.integers(len(edges))))
            w = next(ids)
            internal.append(w)
            edges += [(u, w), (w, v), (w, leaf)]
    return RoutingTree(edges)


def make_tree(shape: str, n: int, seed: int | None = None) -> RoutingTree:
    if shape == "balanced":
        return balanced_tree(n)
    if shape == "caterpillar":
        return caterpillar_tree(n)
    if shape == "star":
        return star_tree(n)
    if shape == "random":
        return random_tree(n, np.random.default_rng(seed))
    raise ValidationError(f"unknown tree shape {shape!r}; expected one of {SHAPES}")
