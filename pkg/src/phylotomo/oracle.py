"""Exact ground truth on small discrete instances.

Joint leaf-delay distributions are enumerated with exact probabilities, so
every expectation below is exact whenever the model uses fractions. This is
the independent reference the estimators and recursions are tested against.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .afi import AdditiveFunction
from .delays import DelayModel
from .errors import GuardError, ValidationError
from .moments import F_hat, G_hat, MomentTable, split_path
from .tree import Edge, RoutingTree

GUARD = 10**7


@dataclass(frozen=True)
class ExactJoint:
    """Joint law of the delays at ``leaves`` as ``(delay vector, probability)`` pairs."""

    leaves: tuple[int, ...]
    support: tuple[tuple[tuple, object], ...]
    _idx: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_idx", {a: i for i, a in enumerate(self.leaves)})

    def index(self, a: int) -> int:
        try:
            return self._idx[a]
        except KeyError:
            raise ValidationError(f"leaf {a} is not in this joint") from None

    @property
    def total(self):
        return sum(p for _, p in self.support)

    def expect(self, fn):
        return sum(p * fn(v) for v, p in self.support)


def _require_discrete(model: DelayModel):
    if not model.is_discrete:
        raise ValidationError("exact enumeration needs every edge distribution to be discrete")


def exact_joint(
    tree: RoutingTree, model: DelayModel, leaves: Iterable[int] | None = None
) -> ExactJoint:
    """Enumerate the joint law of the delays at ``leaves`` (default: all leaves).

    Subtrees holding none of the requested leaves are marginalised away, so a
    joint over two or three leaves stays small on any tree.
    """
    _require_discrete(model)
    if model.tree is not tree and set(model.tree.edges) != set(tree.edges):
        raise ValidationError("model does not belong to this tree")
    want = set(tree.leaves if leaves is None else leaves)
    if not want:
        raise ValidationError("no leaves requested")
    for a in want:
        tree.require_leaf(a)

    size = 1
    for p, c in tree.edges:
        if tree.leaves_below(c) & want:
            size *= len(model.dists[(p, c)].values)
            if size > GUARD:
                raise GuardError(f"joint support exceeds {GUARD} combinations")

    def sub(node) -> tuple[list[int], dict]:
        order: list[int] = []
        dist: dict = {(): 1}
        if node in want:
            order.append(node)
            dist = {(0,): 1}
        for c in tree.children(node):
            if not tree.leaves_below(c) & want:
                continue
            c_order, c_dist = sub(c)
            edge = model.dists[(node, c)]
            shifted: dict = defaultdict(int)
            for vec, p in c_dist.items():
                for d, q in zip(edge.values, edge.probs):
                    if q:
                        shifted[tuple(x + d for x in vec)] += p * q
            merged: dict = defaultdict(int)
            for v1, p1 in dist.items():
                for v2, p2 in shifted.items():
                    merged[v1 + v2] += p1 * p2
            dist = merged
            order += c_order
        return order, dist

    order, dist = sub(tree.root)
    perm = sorted(range(len(order)), key=lambda i: order[i])
    out = tuple(
        (tuple(vec[i] for i in perm), p) for vec, p in sorted(dist.items()) if p
    )
    return ExactJoint(tuple(order[i] for i in perm), out)


def exact_delta(joint: ExactJoint, a: int, b: int, j: int):
    """Exact ``E[(X - E X)^j]`` for ``X = D_a - D_b``."""
    ia, ib = joint.index(a), joint.index(b)
    m = joint.expect(lambda v: v[ia] - v[ib])
    return joint.expect(lambda v: (v[ia] - v[ib] - m) ** j)


def exact_phi(joint: ExactJoint, a: int, b: int, c: int, j: int):
    """Exact third-leaf statistic, the expectation of what ``phi_hat`` averages."""
    if len({a, b, c}) != 3:
        raise ValidationError("exact_phi needs three distinct leaves")
    ia, ib, ic = joint.index(a), joint.index(b), joint.index(c)
    mx = joint.expect(lambda v: v[ia] - v[ib])
    mac = joint.expect(lambda v: v[ia] - v[ic])
    mbc = joint.expect(lambda v: v[ib] - v[ic])
    sign = (-1) ** (j - 1)
    return joint.expect(
        lambda v: (v[ia] - v[ib] - mx) ** (j - 1)
        * ((v[ia] - v[ic] - mac) + sign * (v[ib] - v[ic] - mbc))
    )


def exact_tree_metric(tree: RoutingTree, weights: Mapping[Edge, object]) -> AdditiveFunction:
    """Path sums of ``weights`` between every pair of leaves (any sign allowed)."""
    missing = set(tree.edges) - set(weights)
    if missing:
        raise ValidationError(f"weights missing for edges {sorted(missing)}")
    height = {tree.root: 0}
    for p, c in tree.edges:
        height[c] = height[p] + weights[(p, c)]
    L = tree.leaves
    exact = any(isinstance(w, Fraction) for w in weights.values())
    vals = np.zeros((len(L), len(L)), dtype=object if exact else float)
    for i, a in enumerate(L):
        for k in range(i + 1, len(L)):
            b = L[k]
            vals[i, k] = vals[k, i] = height[a] + height[b] - 2 * height[tree.lca(a, b)]
    return AdditiveFunction(L, vals)


def exact_moment_table(model: DelayModel, J: int) -> MomentTable:
    table = MomentTable(model.tree.edges, J)
    for j in range(2, J + 1):
        table.store(j, model.moment_weights(j))
    return table


class ExactStatistics:
    """Drop-in replacement for sample statistics with exact expectations."""

    def __init__(self, tree: RoutingTree, model: DelayModel):
        _require_discrete(model)
        self.tree, self.model = tree, model
        self.leaves = tree.leaves
        self._joints: dict[frozenset, ExactJoint] = {}
        self.queried: set[frozenset[int]] = set()

    def joint(self, *leaves) -> ExactJoint:
        key = frozenset(leaves)
        if key not in self._joints:
            self._joints[key] = exact_joint(self.tree, self.model, key)
        return self._joints[key]

    def delta(self, a, b, j):
        self.queried.add(frozenset((a, b)))
        return exact_delta(self.joint(a, b), a, b, j)

    def phi(self, a, b, c, j):
        self.queried.add(frozenset((a, b)))
        return exact_phi(self.joint(a, b, c), a, b, c, j)


@dataclass
class LemmaReport:
    """Largest residuals of the two moment identities over an instance."""

    pair_residual: object = 0
    third_leaf_residual: object = 0
    third_leaf_spread: object = 0
    pair_checks: int = 0
    third_leaf_checks: int = 0
    instances: int = 1

    def merge(self, other: "LemmaReport") -> "LemmaReport":
        return LemmaReport(
            max(self.pair_residual, other.pair_residual),
            max(self.third_leaf_residual, other.third_leaf_residual),
            max(self.third_leaf_spread, other.third_leaf_spread),
            self.pair_checks + other.pair_checks,
            self.third_leaf_checks + other.third_leaf_checks,
            self.instances + other.instances,
        )

    @property
    def max_residual(self):
        return max(self.pair_residual, self.third_leaf_residual, self.third_leaf_spread)

    def to_dict(self) -> list[dict]:
        return [
            {"identity": "pair_moment", "max_residual": float(self.pair_residual),
             "checks": self.pair_checks, "instances": self.instances},
            {"identity": "third_leaf_moment", "max_residual": float(self.third_leaf_residual),
             "checks": self.third_leaf_checks, "instances": self.instances},
            {"identity": "third_leaf_choice_spread", "max_residual": float(self.third_leaf_spread),
             "checks": self.third_leaf_checks, "instances": self.instances},
        ]


def check_lemma_identities(tree: RoutingTree, model: DelayModel, J: int) -> LemmaReport:
    """Evaluate both moment identities on every admissible pair, third leaf and order.

    Pair identity: pair moment minus the lower-order correction equals the
    ``a``-side moment sum plus ``(-1)^j`` times the ``b``-side sum, for every
    ordered pair with ``a`` a receiver. Third-leaf identity: the third-leaf
    statistic minus its correction equals the full path moment sum, for every
    pair of receivers and every leaf ``c`` outside the subtree of their
    common ancestor (the source included).
    """
    stats = ExactStatistics(tree, model)
    table = exact_moment_table(model, J)
    rep = LemmaReport()
    L = tree.leaves
    for j in range(2, J + 1):
        wj = model.moment_weights(j)
        for a in tree.receivers:
            for b in L:
                if a == b:
                    continue
                up, down = split_path(tree, a, b)
                lhs = stats.delta(a, b, j) - F_hat(a, b, j, table, tree)
                rhs = sum(wj[e] for e in up) + (-1) ** j * sum(wj[e] for e in down)
                rep.pair_residual = max(rep.pair_residual, abs(lhs - rhs))
                rep.pair_checks += 1
        for i, a in enumerate(tree.receivers):
            for b in tree.receivers[i + 1 :]:
                up, down = split_path(tree, a, b)
                target = sum(wj[e] for e in up) + sum(wj[e] for e in down)
                g = G_hat(1, a, b, j, table, tree) + G_hat(2, a, b, j, table, tree)
                below = tree.leaves_below(tree.lca(a, b))
                values = []
                for c in L:
                    if c in below:
                        continue
                    val = stats.phi(a, b, c, j) - g
                    values.append(val)
                    rep.third_leaf_residual = max(rep.third_leaf_residual, abs(val - target))
                    rep.third_leaf_checks += 1
                if values:
                    rep.third_leaf_spread = max(rep.third_leaf_spread, max(values) - min(values))
    return rep


def random_instance(rng: np.random.Generator, max_receivers: int = 6, max_support: int = 3):
    """Random tree and rational discrete model small enough for exact checks."""
    from .delays import random_discrete_model
    from .generate import random_tree

    n = int(rng.integers(2, max_receivers + 1))
    tree = random_tree(n, rng)
    return tree, random_discrete_model(tree, rng, max_support=max_support)
