"""Per-edge weights of an additive leaf function on a known tree.

Each edge weight is read off a four-point combination of the function on
representative leaves, one from each subtree hanging off the edge's two
endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ValidationError
from .tree import Edge, RoutingTree


@dataclass(frozen=True, eq=False)
class AdditiveFunction:
    """Symmetric leaf-pair function with zero diagonal; values may be negative."""

    leaves: tuple[int, ...]
    values: np.ndarray
    _idx: dict = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        n = len(self.leaves)
        if v.shape != (n, n):
            raise ValidationError(f"additive function must be {n}x{n}, got {v.shape}")
        if v.dtype != object:
            v = v.astype(float)
            if not np.all(np.isfinite(v)):
                raise ValidationError("additive function values must be finite")
        v = v.copy()
        for i in range(n):
            v[i, i] = 0
        if not all(v[i, j] == v[j, i] for i in range(n) for j in range(i)):
            raise ValidationError("additive function must be symmetric")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "leaves", tuple(int(a) for a in self.leaves))
        object.__setattr__(self, "_idx", {a: i for i, a in enumerate(self.leaves)})

    @classmethod
    def from_pairs(cls, leaves, pairs: Mapping[tuple[int, int], object]) -> "AdditiveFunction":
        """Build from a ``{(a, b): value}`` map; missing pairs become NaN."""
        leaves = tuple(leaves)
        idx = {a: i for i, a in enumerate(leaves)}
        exact = any(not isinstance(x, (float, int, np.floating)) for x in pairs.values())
        v = np.full((len(leaves), len(leaves)), np.nan, dtype=object if exact else float)
        for (a, b), x in pairs.items():
            v[idx[a], idx[b]] = v[idx[b], idx[a]] = x
        out = cls.__new__(cls)
        # bypass the finiteness check: unread entries are allowed to be missing
        for i in range(len(leaves)):
            v[i, i] = 0
        v.setflags(write=False)
        object.__setattr__(out, "leaves", leaves)
        object.__setattr__(out, "values", v)
        object.__setattr__(out, "_idx", idx)
        return out

    def __call__(self, a: int, b: int):
        x = self.values[self._idx[a], self._idx[b]]
        return x if self.values.dtype == object else float(x)


@dataclass(frozen=True)
class EdgeQuartet:
    """Representative leaves for one edge.

    ``near_a``/``near_b`` sit beyond the parent endpoint, ``far_a``/``far_b``
    beyond the child endpoint. For a terminal edge the leaf itself stands in
    for both far representatives (or both near ones for the source edge).
    """

    near_a: int
    near_b: int
    far_a: int
    far_b: int

    def pairs(self) -> list[tuple[int, int]]:
        out = []
        for a, b in (
            (self.near_a, self.far_a),
            (self.near_b, self.far_b),
            (self.near_a, self.near_b),
            (self.far_a, self.far_b),
        ):
            if a != b:
                out.append((a, b))
        return out


def _two_nearest(tree: RoutingTree, node: int, exclude: int) -> tuple[int, int]:
    """Closest leaves in the two nearest subtrees at ``node``, away from ``exclude``."""
    ranked = sorted(tree.nearest_leaf(node, z) for z in tree.neighbors(node) if z != exclude)
    if len(ranked) < 2:
        raise ValidationError(f"internal node {node} has degree < 3")
    return ranked[0][1], ranked[1][1]


def afi_representatives(tree: RoutingTree) -> dict[Edge, EdgeQuartet]:
    """Representative quartet per edge, nearest subtrees first (ties to smaller leaf id)."""
    # cached on the instance: equal trees may still use different internal ids
    hit = getattr(tree, "_afi_reps", None)
    if hit is None:
        hit = _representatives(tree)
        tree._afi_reps = hit
    return hit


def _representatives(tree: RoutingTree) -> dict[Edge, EdgeQuartet]:
    out = {}
    for p, c in tree.edges:
        if len(tree.leaves) == 2:
            out[(p, c)] = EdgeQuartet(p, p, c, c)
            continue
        if tree.is_leaf(p):
            n1, n2 = p, p
        else:
            n1, n2 = _two_nearest(tree, p, c)
        if tree.is_leaf(c):
            f1, f2 = c, c
        else:
            f1, f2 = _two_nearest(tree, c, p)
        out[(p, c)] = EdgeQuartet(n1, n2, f1, f2)
    return out


def afi_pairs(tree: RoutingTree) -> list[tuple[int, int]]:
    """Every leaf pair the four-point combinations read, as sorted tuples."""
    seen = set()
    for q in afi_representatives(tree).values():
        for a, b in q.pairs():
            seen.add((min(a, b), max(a, b)))
    return sorted(seen)


def afi(tree: RoutingTree, W: Callable[[int, int], float]) -> dict[Edge, float]:
    """Signed edge weights of ``W`` on ``tree`` by the four-point combination.

    ``W`` is any callable on leaf pairs (an :class:`AdditiveFunction`, a
    distorted metric, or a plain function). If ``W`` is exactly additive on
    ``tree`` the output reproduces its weights.
    """

    def w(a, b):
        return 0 if a == b else W(a, b)

    out = {}
    for e, q in afi_representatives(tree).items():
        out[e] = (
            w(q.near_a, q.far_a) + w(q.near_b, q.far_b) - w(q.near_a, q.near_b) - w(q.far_a, q.far_b)
        ) / 2
    return out
