"""Rooted routing trees, leaf paths, chord depth and bipartitions.

The source is always leaf ``0`` and is the root of the tree. Every other leaf is
a receiver. Internal nodes must have degree at least three. Edges are keyed as
``(parent, child)`` pairs oriented away from the source.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .errors import IncompatibleBipartitionsError, ValidationError

Edge = tuple[int, int]
EdgePath = tuple[Edge, ...]

SOURCE = 0


def _check_id(x) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ValidationError(f"node ids must be integers, got {x!r}")
    return x


class RoutingTree:
    """Immutable multicast routing tree rooted at the source leaf.

    Parameters
    ----------
    edges : iterable of (int, int)
        Undirected edges. Orientation is recomputed from ``root``.
    root : int
        Id of the source leaf (``0`` unless you know better).
    """

    def __init__(self, edges: Iterable[tuple[int, int]], root: int = SOURCE):
        adj: dict[int, set[int]] = {}
        n_edges = 0
        for u, v in edges:
            u, v = _check_id(u), _check_id(v)
            if u == v:
                raise ValidationError(f"self loop on node {u}")
            if v in adj.get(u, ()):
                raise ValidationError(f"duplicate edge ({u}, {v})")
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)
            n_edges += 1
        root = _check_id(root)
        if root not in adj:
            raise ValidationError(f"root {root} is not a node of the tree")
        if n_edges != len(adj) - 1:
            raise ValidationError("edge count does not match a tree (cycle or forest)")
        if len(adj[root]) != 1:
            raise ValidationError(f"root {root} must be a leaf, has degree {len(adj[root])}")
        for node, nbrs in adj.items():
            if 1 < len(nbrs) < 3:
                raise ValidationError(f"internal node {node} has degree {len(nbrs)} < 3")

        parent: dict[int, int | None] = {root: None}
        depth = {root: 0}
        order = [root]
        queue = deque([root])
        while queue:
            x = queue.popleft()
            for y in sorted(adj[x]):
                if y not in parent:
                    parent[y] = x
                    depth[y] = depth[x] + 1
                    order.append(y)
                    queue.append(y)
        if len(order) != len(adj):
            raise ValidationError("tree is not connected")

        self.root = root
        self._adj = {u: tuple(sorted(vs)) for u, vs in adj.items()}
        self._parent = parent
        self._depth = depth
        self._children = {
            u: tuple(v for v in self._adj[u] if v != parent[u]) for u in self._adj
        }
        self.nodes = tuple(sorted(self._adj))
        self.leaves = tuple(u for u in self.nodes if len(self._adj[u]) == 1)
        self.receivers = tuple(u for u in self.leaves if u != root)
        self.internal_nodes = tuple(u for u in self.nodes if len(self._adj[u]) > 1)
        self.preorder = tuple(order)
        self.edges: tuple[Edge, ...] = tuple((parent[v], v) for v in order[1:])
        self._leafset = frozenset(self.leaves)
        self._below: dict[int, frozenset[int]] = {}
        self._near: dict[tuple[int, int], tuple[int, int]] = {}

    def __repr__(self):
        return f"RoutingTree(n_leaves={len(self.leaves)}, n_nodes={len(self.nodes)})"

    def __eq__(self, other):
        # labeled-leaf isomorphism
        if not isinstance(other, RoutingTree):
            return NotImplemented
        return (
            self.root == other.root
            and self.leaves == other.leaves
            and bipartitions_of(self) == bipartitions_of(other)
        )

    def __hash__(self):
        return hash((self.root, self.leaves, bipartitions_of(self)))

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)

    def neighbors(self, node: int) -> tuple[int, ...]:
        return self._adj[node]

    def degree(self, node: int) -> int:
        return len(self._adj[node])

    def parent(self, node: int) -> int | None:
        return self._parent[node]

    def children(self, node: int) -> tuple[int, ...]:
        return self._children[node]

    def depth(self, node: int) -> int:
        return self._depth[node]

    def is_leaf(self, node: int) -> bool:
        return node in self._leafset

    def edge_key(self, u: int, v: int) -> Edge:
        """Return the ``(parent, child)`` key of the edge joining ``u`` and ``v``."""
        if self._parent.get(v) == u:
            return (u, v)
        if self._parent.get(u) == v:
            return (v, u)
        raise ValidationError(f"({u}, {v}) is not an edge")

    def require_leaf(self, a: int) -> int:
        if a not in self._leafset:
            raise ValidationError(f"unknown leaf id {a!r}")
        return a

    def lca(self, u: int, v: int) -> int:
        while self._depth[u] > self._depth[v]:
            u = self._parent[u]
        while self._depth[v] > self._depth[u]:
            v = self._parent[v]
        while u != v:
            u, v = self._parent[u], self._parent[v]
        return u

    def path_nodes(self, u: int, v: int) -> list[int]:
        """Node sequence of the unique simple path from ``u`` to ``v``."""
        g = self.lca(u, v)
        up = [u]
        while up[-1] != g:
            up.append(self._parent[up[-1]])
        down = [v]
        while down[-1] != g:
            down.append(self._parent[down[-1]])
        return up + down[-2::-1]

    def distance(self, u: int, v: int) -> int:
        return self._depth[u] + self._depth[v] - 2 * self._depth[self.lca(u, v)]

    def leaves_below(self, node: int) -> frozenset[int]:
        """Leaves in the subtree rooted at ``node`` (away from the source)."""
        if node not in self._below:
            stack, out = [node], []
            while stack:
                x = stack.pop()
                kids = self._children[x]
                if not kids:
                    out.append(x)
                stack.extend(kids)
            self._below[node] = frozenset(out)
        return self._below[node]

    def nearest_leaf(self, frm: int, to: int) -> tuple[int, int]:
        """Closest leaf to ``to`` in the component of ``to`` once edge ``frm``-``to`` is cut.

        Returns ``(graph distance, leaf id)``; ties go to the smallest leaf id.
        """
        key = (frm, to)
        hit = self._near.get(key)
        if hit is not None:
            return hit
        # iterative post-order over the directed component
        stack = [(frm, to, False)]
        while stack:
            f, t, ready = stack.pop()
            if (f, t) in self._near:
                continue
            if len(self._adj[t]) == 1 and f in self._adj[t]:
                self._near[(f, t)] = (0, t)
                continue
            nxt = [z for z in self._adj[t] if z != f]
            if ready:
                best = min((self._near[(t, z)][0] + 1, self._near[(t, z)][1]) for z in nxt)
                self._near[(f, t)] = best
            else:
                stack.append((f, t, True))
                stack.extend((t, z, False) for z in nxt if (t, z) not in self._near)
        return self._near[key]


@dataclass(frozen=True)
class Bipartition:
    """Unordered split ``side_a | side_b`` of a leaf set.

    Canonicalised so that ``side_a`` holds the smallest leaf id, which makes
    ``A|B == B|A`` under the dataclass equality.
    """

    side_a: frozenset[int]
    side_b: frozenset[int]

    def __post_init__(self):
        a, b = frozenset(self.side_a), frozenset(self.side_b)
        if not a or not b:
            raise ValidationError("bipartition sides must be nonempty")
        if a & b:
            raise ValidationError(f"bipartition sides overlap on {sorted(a & b)}")
        if min(b) < min(a):
            a, b = b, a
        object.__setattr__(self, "side_a", a)
        object.__setattr__(self, "side_b", b)

    @classmethod
    def from_side(cls, side: Iterable[int], leaves: Iterable[int]) -> "Bipartition":
        side = frozenset(side)
        return cls(side, frozenset(leaves) - side)

    @property
    def leaves(self) -> frozenset[int]:
        return self.side_a | self.side_b

    @property
    def is_trivial(self) -> bool:
        return min(len(self.side_a), len(self.side_b)) == 1

    def side_of(self, leaf: int) -> frozenset[int]:
        return self.side_a if leaf in self.side_a else self.side_b

    def __repr__(self):
        return f"{sorted(self.side_a)}|{sorted(self.side_b)}"


def path_edges(tree: RoutingTree, a: int, b: int) -> EdgePath:
    """Edges of the path from leaf ``a`` to leaf ``b``, as directed steps."""
    tree.require_leaf(a)
    tree.require_leaf(b)
    if a == b:
        raise ValidationError("path_edges needs two distinct leaves")
    nodes = tree.path_nodes(a, b)
    return tuple(zip(nodes[:-1], nodes[1:]))


def common_ancestor(tree: RoutingTree, a: int, b: int) -> int:
    """Node where the paths a-b, source-a and source-b meet."""
    for x in (a, b):
        tree.require_leaf(x)
        if x == tree.root:
            raise ValidationError("common_ancestor is undefined for the source leaf")
    if a == b:
        raise ValidationError("common_ancestor needs two distinct leaves")
    return tree.lca(a, b)


def edge_chord_depths(tree: RoutingTree) -> dict[Edge, int]:
    """Length of the shortest leaf-to-leaf path through each edge."""
    out = {}
    for p, c in tree.edges:
        out[(p, c)] = tree.nearest_leaf(c, p)[0] + tree.nearest_leaf(p, c)[0] + 1
    return out


def chord_depth(tree: RoutingTree) -> int:
    return max(edge_chord_depths(tree).values())


def bipartitions_of(tree: RoutingTree) -> frozenset[Bipartition]:
    """One leaf split per edge (trivial leaf splits included)."""
    leaves = frozenset(tree.leaves)
    return frozenset(Bipartition.from_side(tree.leaves_below(c), leaves) for _, c in tree.edges)


def _incompatible(x: int, y: int) -> bool:
    # x, y: bitmasks of the sides away from the root
    return bool(x & y) and (x & y) != x and (x & y) != y


def tree_from_bipartitions(
    leaves: Iterable[int], parts: Iterable[Bipartition], root: int = SOURCE
) -> RoutingTree:
    """Assemble the unique tree whose edge splits are ``parts`` plus the trivial ones.

    Raises :class:`IncompatibleBipartitionsError` naming a conflicting pair when
    no single tree realises all of ``parts``.
    """
    leaves = sorted(set(leaves))
    if root not in leaves:
        raise ValidationError(f"leaf set must contain the source {root}")
    if len(leaves) < 2:
        raise ValidationError("need at least two leaves")
    index = {x: i for i, x in enumerate(leaves)}
    full = frozenset(leaves)

    clusters: dict[int, Bipartition] = {}
    for bp in parts:
        if bp.leaves != full:
            raise ValidationError(f"bipartition {bp} is not over the leaf set")
        side = bp.side_b if root in bp.side_a else bp.side_a
        if len(side) < 2 or len(side) > len(leaves) - 2:
            continue
        mask = 0
        for x in side:
            mask |= 1 << index[x]
        clusters.setdefault(mask, bp)

    masks = sorted(clusters, key=lambda m: (-bin(m).count("1"), m))
    for i, x in enumerate(masks):
        for y in masks[i + 1 :]:
            if _incompatible(x, y):
                raise IncompatibleBipartitionsError(clusters[x], clusters[y])

    if len(leaves) == 2:
        return RoutingTree([(leaves[0], leaves[1])], root=root)

    next_id = max(leaves) + 1
    top = next_id
    next_id += 1
    node_of = {}
    edges = [(root, top)]
    placed: list[int] = []
    for m in masks:
        parent = top
        # smallest already-placed cluster containing m; masks are size-descending
        for q in reversed(placed):
            if q & m == m:
                parent = node_of[q]
                break
        node_of[m] = next_id
        edges.append((parent, next_id))
        next_id += 1
        placed.append(m)
    for x in leaves:
        if x == root:
            continue
        bit = 1 << index[x]
        parent = top
        for q in reversed(placed):
            if q & bit:
                parent = node_of[q]
                break
        edges.append((parent, x))
    return RoutingTree(edges, root=root)


def closest_leaf_above(tree: RoutingTree, a: int, b: int) -> int:
    """Closest leaf to the common ancestor of ``a`` and ``b`` on its source side.

    Candidates are leaves outside the subtree of the common ancestor, so the
    source always qualifies. Ties go to the smallest leaf id.
    """
    tree.require_leaf(a)
    tree.require_leaf(b)
    g = common_ancestor(tree, a, b)
    below = tree.leaves_below(g)
    best = None
    for c in tree.leaves:
        if c in below or c in (a, b):
            continue
        key = (tree.distance(g, c), c)
        if best is None or key < best:
            best = key
    return best[1]

