"""Newick encode/decode for routing trees.

Leaf labels are the integer leaf ids. Internal nodes are unlabeled. Branch
lengths, when present, carry per-edge weights. Trees are written rooted at the
source, whose label closes the outermost group: ``(((1,2),3))0;``.
"""

from __future__ import annotations

import re
from typing import Mapping

from .errors import ValidationError
from .tree import Edge, RoutingTree

_TOKEN = re.compile(r"\s*([(),:;]|[^(),:;\s]+)")


def _fmt(x: float) -> str:
    return repr(float(x))


def to_newick(tree: RoutingTree, weights: Mapping[Edge, float] | None = None) -> str:
    """Serialise ``tree`` with the source as the labeled outermost node."""

    def rec(node: int) -> str:
        kids = tree.children(node)
        text = str(node) if not kids else "(" + ",".join(rec(c) for c in kids) + ")"
        if weights is not None:
            text += ":" + _fmt(weights[(tree.parent(node), node)])
        return text

    (top,) = tree.children(tree.root)
    return "(" + rec(top) + ")" + str(tree.root) + ";"


class _Node:
    __slots__ = ("label", "length", "children")

    def __init__(self):
        self.label = None
        self.length = None
        self.children = []


def _parse_nodes(text: str) -> _Node:
    tokens = [m.group(1) for m in _TOKEN.finditer(text.strip())]
    if not tokens or tokens[-1] != ";":
        raise ValidationError("newick string must end with ';'")
    pos = 0

    def node() -> _Node:
        nonlocal pos
        out = _Node()
        if tokens[pos] == "(":
            pos += 1
            out.children.append(node())
            while tokens[pos] == ",":
                pos += 1
                out.children.append(node())
            if tokens[pos] != ")":
                raise ValidationError(f"expected ')' at token {pos}, got {tokens[pos]!r}")
            pos += 1
        if tokens[pos] not in "(),:;":
            out.label = tokens[pos]
            pos += 1
        if tokens[pos] == ":":
            pos += 1
            try:
                out.length = float(tokens[pos])
            except ValueError as exc:
                raise ValidationError(f"bad branch length {tokens[pos]!r}") from exc
            pos += 1
        return out

    try:
        root = node()
    except IndexError as exc:
        raise ValidationError("truncated newick string") from exc
    if tokens[pos] != ";" or pos != len(tokens) - 1:
        raise ValidationError(f"unexpected token {tokens[pos]!r} at position {pos}")
    return root


def parse_newick(text: str, root: int = 0) -> tuple[RoutingTree, dict[Edge, float] | None]:
    """Parse a Newick string into a tree and optional edge weights.

    Unlabeled degree-2 nodes (the implicit root of a rooted binary Newick) are
    suppressed and their branch lengths summed. Weights are returned only when
    every edge carries a length.
    """
    top = _parse_nodes(text)
    labeled: dict[int, _Node] = {}
    all_nodes = []
    stack = [top]
    while stack:
        x = stack.pop()
        all_nodes.append(x)
        if x.label is None and not x.children:
            raise ValidationError("every leaf needs an integer label")
        if x.label is not None:
            try:
                lab = int(x.label)
            except ValueError as exc:
                raise ValidationError(f"leaf labels must be integers, got {x.label!r}") from exc
            if lab in labeled:
                raise ValidationError(f"duplicate label {lab}")
            labeled[lab] = x
        stack.extend(x.children)

    ids = {id(n): lab for lab, n in labeled.items()}
    nxt = max(labeled, default=-1) + 1
    for n in all_nodes:
        if id(n) not in ids:
            ids[id(n)] = nxt
            nxt += 1

    adj: dict[int, dict[int, float | None]] = {ids[id(n)]: {} for n in all_nodes}
    for n in all_nodes:
        for c in n.children:
            a, b = ids[id(n)], ids[id(c)]
            adj[a][b] = c.length
            adj[b][a] = c.length

    for n in all_nodes:
        u = ids[id(n)]
        if n.label is None and len(adj[u]) == 2:
            (a, la), (b, lb) = adj[u].items()
            merged = None if la is None or lb is None else la + lb
            del adj[a][u], adj[b][u], adj[u]
            adj[a][b] = merged
            adj[b][a] = merged
    for lab in labeled:
        if len(adj[lab]) != 1:
            raise ValidationError(f"labeled node {lab} is not a leaf")

    edges = {(min(a, b), max(a, b)): ln for a, nb in adj.items() for b, ln in nb.items()}
    tree = RoutingTree(edges, root=root)
    if any(v is None for v in edges.values()):
        return tree, None
    weights = {tree.edge_key(a, b): ln for (a, b), ln in edges.items()}
    return tree, weights
