"""Recursive recovery of per-edge central delay moments on a known tree.

For each order ``j`` the leaf-pair path sum ``W_j(a, b)`` of the ``j``-th edge
moments is isolated from a leaf statistic by subtracting a correction built
from lower-order edge moments. The per-edge values then come from the
four-point combination. Two statistics are supported:

* ``sym_er`` uses the centred pair moment and is valid for even ``j`` (all odd
  moments are taken to be zero, as for delays symmetric about their mean);
* ``er`` uses a third leaf above the pair and handles every order.

Pairs that contain the source use the pair moment at every order, since the
source delay is identically zero and the whole path lies on one side.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol

from .afi import afi, afi_pairs
from .errors import MissingMomentError, ValidationError
from .tree import Edge, RoutingTree, closest_leaf_above

MAX_ORDER = 8

Composition = tuple[tuple[int, ...], tuple[int, ...]]


class PairStatistics(Protocol):
    def delta(self, a: int, b: int, j: int): ...

    def phi(self, a: int, b: int, c: int, j: int): ...


def _check_order(j: int):
    if j > MAX_ORDER:
        raise ValidationError(f"moment order {j} exceeds the supported maximum {MAX_ORDER}")


@lru_cache(maxsize=None)
def enumerate_Dj(alpha: int, beta: int, j: int) -> tuple[Composition, ...]:
    """All ``(x, y)`` with entries in ``0..j-1`` summing to ``j``, lexicographic."""
    if alpha < 1 or beta < 0 or j < 2:
        raise ValidationError("enumerate_Dj needs alpha >= 1, beta >= 0, j >= 2")
    _check_order(j)
    cap = j - 1
    slots = alpha + beta
    out = []

    def rec(prefix: list, left: int):
        pos = len(prefix)
        if pos == slots:
            if left == 0:
                out.append((tuple(prefix[:alpha]), tuple(prefix[alpha:])))
            return
        # remaining slots can absorb at most cap each
        for v in range(0, min(cap, left) + 1):
            if left - v <= cap * (slots - pos - 1):
                prefix.append(v)
                rec(prefix, left - v)
                prefix.pop()

    rec([], j)
    return tuple(out)


@lru_cache(maxsize=None)
def multinomial(n: int, parts: tuple[int, ...]) -> int:
    """``n! / prod(p!)``; ``parts`` must sum to ``n``."""
    if sum(parts) != n or any(p < 0 for p in parts):
        raise ValidationError("multinomial parts must be nonnegative and sum to n")
    out = math.factorial(n)
    for p in parts:
        out //= math.factorial(p)
    return out


class MomentTable:
    """Per-edge central moments of orders ``0..J``.

    Order 0 is 1 and order 1 is 0 on every edge. Orders above
    :attr:`filled` are missing until a recursion step stores them.
    """

    def __init__(self, edges, J: int):
        if J < 2:
            raise ValidationError("J must be >= 2")
        _check_order(J)
        self.J = J
        self.edges = tuple(edges)
        self._m: dict[Edge, list] = {e: [1, 0] + [None] * (J - 1) for e in self.edges}
        self.filled = 1

    def get(self, e: Edge, j: int):
        if j > self.filled:
            raise MissingMomentError(f"order {j} is not available (filled up to {self.filled})")
        return self._m[e][j]

    def store(self, j: int, values: dict):
        if j != self.filled + 1:
            raise MissingMomentError(f"order {j} stored before order {self.filled + 1}")
        for e in self.edges:
            self._m[e][j] = values[e]
        self.filled = j

    def order(self, j: int) -> dict:
        return {e: self.get(e, j) for e in self.edges}

    def restrict(self, below: int) -> "MomentView":
        """Read-only view exposing only orders strictly below ``below``."""
        return MomentView(self, below)

    def to_dict(self) -> dict:
        return {
            "J": self.J,
            "edges": [
                {"edge": list(e), "moments": [float(x) for x in self._m[e][2 : self.filled + 1]]}
                for e in self.edges
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MomentTable":
        J = int(d["J"])
        edges = [tuple(x["edge"]) for x in d["edges"]]
        table = cls(edges, J)
        rows = {tuple(x["edge"]): x["moments"] for x in d["edges"]}
        depth = min(len(r) for r in rows.values()) if rows else 0
        for j in range(2, 2 + depth):
            table.store(j, {e: rows[e][j - 2] for e in edges})
        return table


class MomentView:
    def __init__(self, table: MomentTable, below: int):
        self._t, self._below = table, below

    def get(self, e: Edge, j: int):
        if j >= self._below:
            raise MissingMomentError(f"order {j} read while computing order {self._below}")
        return self._t.get(e, j)


def split_path(tree: RoutingTree, a: int, b: int) -> tuple[list[Edge], list[Edge]]:
    """Edges from ``a`` up to the common ancestor, and from there down to ``b``."""
    g = tree.lca(a, b)
    up, down = [], []
    x = a
    while x != g:
        up.append((tree.parent(x), x))
        x = tree.parent(x)
    x = b
    while x != g:
        down.append((tree.parent(x), x))
        x = tree.parent(x)
    return up, down


def _prod(moments, edges, powers, signed: bool):
    out = 1
    for e, p in zip(edges, powers):
        m = moments.get(e, p)
        out *= -m if signed and p % 2 else m
    return out


def F_hat(a: int, b: int, j: int, table, tree: RoutingTree):
    """Lower-order correction separating the pair moment from the path moment sum."""
    up, down = split_path(tree, a, b)
    if not up:
        raise ValidationError("the first leaf must not be the common ancestor; put the source second")
    total = 0
    for x, y in enumerate_Dj(len(up), len(down), j):
        total += multinomial(j, x + y) * _prod(table, up, x, False) * _prod(table, down, y, True)
    return total


def G_hat(which: int, a: int, b: int, j: int, table, tree: RoutingTree):
    """Lower-order correction for the third-leaf statistic.

    ``which=1`` weights terms by the exponent on the ``a`` side; ``which=2``
    weights by the exponent on the ``b`` side and carries the alternating sign
    on the ``a`` side instead.
    """
    if which not in (1, 2):
        raise ValidationError("which must be 1 or 2")
    up, down = split_path(tree, a, b)
    if not up or not down:
        raise ValidationError("G_hat needs a pair on two sides of its common ancestor")
    total = 0
    for x, y in enumerate_Dj(len(up), len(down), j):
        weight = sum(x) if which == 1 else sum(y)
        if not weight:
            continue
        # summing x_i* * (j-1)!/(x!y!) over the marked slot i* gives sum(x) * j!/(x!y!) / j
        coeff = weight * multinomial(j, x + y) // j
        if which == 1:
            total += coeff * _prod(table, up, x, False) * _prod(table, down, y, True)
        else:
            total += coeff * _prod(table, up, x, True) * _prod(table, down, y, False)
    return total


def _pairs_for(tree: RoutingTree, pairs: str) -> list[tuple[int, int]]:
    if pairs == "afi":
        out = afi_pairs(tree)
    elif pairs == "all":
        L = tree.leaves
        out = [(a, b) for i, a in enumerate(L) for b in L[i + 1 :]]
    else:
        raise ValidationError(f"pairs must be 'afi' or 'all', got {pairs!r}")
    # source pairs are oriented receiver-first
    return [(b, a) if a == tree.root else (a, b) for a, b in out]


def _check_leaves(stats, tree: RoutingTree):
    samples = getattr(stats, "samples", None)
    leaves = getattr(samples, "leaves", None) or getattr(stats, "leaves", None)
    if leaves is not None and set(leaves) != set(tree.leaves):
        raise ValidationError(
            f"sample leaves {sorted(leaves)} do not match tree leaves {sorted(tree.leaves)}"
        )


def _stats(source):
    # accept a SampleMatrix directly
    if hasattr(source, "delta") and hasattr(source, "phi"):
        return source
    from .estimators import SampleStatistics

    return SampleStatistics(source)


def _solve_order(tree, table, j, pair_list, pair_value):
    view = table.restrict(j)
    W = {}
    for a, b in pair_list:
        W[(a, b)] = W[(b, a)] = pair_value(a, b, view)
    return afi(tree, lambda a, b: W[(a, b)])


def sym_er(samples, tree: RoutingTree, J: int, pairs: str = "afi") -> MomentTable:
    """Even-order moments from centred pair moments; odd orders are set to zero."""
    stats = _stats(samples)
    _check_leaves(stats, tree)
    table = MomentTable(tree.edges, J)
    pair_list = _pairs_for(tree, pairs)
    for j in range(2, J + 1):
        if j % 2:
            table.store(j, {e: 0 for e in tree.edges})
            continue

        def value(a, b, view, j=j):
            return stats.delta(a, b, j) - F_hat(a, b, j, view, tree)

        table.store(j, _solve_order(tree, table, j, pair_list, value))
    return table


def er(samples, tree: RoutingTree, J: int, pairs: str = "afi") -> MomentTable:
    """All moments up to ``J`` from third-leaf statistics.

    The third leaf is the closest leaf outside the subtree of the pair's
    common ancestor. Pairs containing the source fall back to the pair moment,
    which is exact for them at every order.
    """
    stats = _stats(samples)
    _check_leaves(stats, tree)
    table = MomentTable(tree.edges, J)
    pair_list = _pairs_for(tree, pairs)
    third = {
        (a, b): closest_leaf_above(tree, a, b) for a, b in pair_list if b != tree.root
    }
    for j in range(2, J + 1):

        def value(a, b, view, j=j):
            if b == tree.root:
                return stats.delta(a, b, j) - F_hat(a, b, j, view, tree)
            c = third[(a, b)]
            g = G_hat(1, a, b, j, view, tree) + G_hat(2, a, b, j, view, tree)
            return stats.phi(a, b, c, j) - g

        table.store(j, _solve_order(tree, table, j, pair_list, value))
    return table
