"""Topology reconstruction from a distorted metric using short distances only.

For every pair of leaves that pass the proximity test, the path between them
is cut into "long edges" from estimated intersection points inside a small
ball (the mini contractor). Each local split is then propagated to all leaves
through the proximity graph (the extender). The union of these splits
determines the tree.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    ExtenderInconsistencyError,
    IncompatibleBipartitionsError,
    ReconstructionError,
    ValidationError,
)
from .estimators import DistortedMetric
from .tree import Bipartition, RoutingTree, tree_from_bipartitions

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DmrParams:
    """Thresholds of the reconstruction; validated against the required inequalities."""

    tau: float
    M_tilde: float
    alpha: float
    alpha_prime: float
    beta: float
    beta_prime: float
    f: float
    g: float
    alpha_tilde: float
    beta_tilde: float

    def __post_init__(self):
        checks = [
            (self.tau > 0, "tau > 0"),
            (self.M_tilde > 0, "M_tilde > 0"),
            (0 < self.f < self.g, "0 < f < g"),
            (0 < self.beta < 1, "0 < beta < 1"),
            (0 < self.beta_prime < 1, "0 < beta' < 1"),
            (0 < self.alpha_tilde < 1 / 6, "alpha~ < 1/6"),
            (self.beta_tilde > 2, "beta~ > 2"),
            (6 < self.alpha_prime + 3 < self.alpha, "6 < alpha' + 3 < alpha"),
            (self.alpha < 1 / self.alpha_tilde, "alpha < 1/alpha~"),
            (
                self.M_tilde / self.beta_tilde + self.tau < self.beta * self.M_tilde,
                "M~/beta~ + tau < beta M~",
            ),
            (
                self.beta * self.M_tilde < (self.beta_prime * self.M_tilde - 3 * self.tau) / 2,
                "beta M~ < (beta' M~ - 3 tau)/2",
            ),
        ]
        bad = [name for ok, name in checks if not ok]
        if bad:
            raise ValidationError("DMR parameters violate: " + ", ".join(bad))

    @classmethod
    def recipe(
        cls,
        f: float,
        g: float,
        depth: float,
        alpha_tilde: float = 1 / 8,
        beta_tilde: float = 3.0,
        alpha_prime: float = 4.0,
        alpha: float = 7.5,
        **overrides,
    ) -> "DmrParams":
        """Default parameters for weights in ``[f, g]`` and chord depth bound ``depth``.

        ``M_tilde = beta_tilde * g * depth`` and ``tau = alpha_tilde * f``; ``beta``
        is the midpoint of its feasible interval and ``beta_prime`` the midpoint
        of the interval left over once ``beta`` is fixed.
        """
        M_tilde = overrides.pop("M_tilde", beta_tilde * g * depth)
        tau = overrides.pop("tau", alpha_tilde * f)
        r = tau / M_tilde
        lo, hi = 1 / beta_tilde + r, (1 - 3 * r) / 2
        if not lo < hi:
            raise ValidationError(f"no feasible beta: need {lo:.4g} < {hi:.4g}")
        beta = overrides.pop("beta", (lo + hi) / 2)
        beta_prime = overrides.pop("beta_prime", (2 * beta + 3 * r + 1) / 2)
        return cls(
            tau=tau,
            M_tilde=M_tilde,
            alpha=alpha,
            alpha_prime=alpha_prime,
            beta=beta,
            beta_prime=beta_prime,
            f=f,
            g=g,
            alpha_tilde=alpha_tilde,
            beta_tilde=beta_tilde,
            **overrides,
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class ProximityGraph:
    """Leaves joined when their metric value is below ``beta * M_tilde``."""

    leaves: tuple[int, ...]
    adjacency: np.ndarray
    _idx: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_idx", {a: i for i, a in enumerate(self.leaves)})

    def index(self, a: int) -> int:
        try:
            return self._idx[a]
        except KeyError:
            raise ValidationError(f"leaf {a} is not in the proximity graph") from None

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adjacency[self.index(u), self.index(v)])

    def edges(self) -> list[tuple[int, int]]:
        iu, iv = np.nonzero(np.triu(self.adjacency, 1))
        return [(self.leaves[i], self.leaves[j]) for i, j in zip(iu, iv)]

    def is_connected(self) -> bool:
        n, _ = connected_components(csr_matrix(self.adjacency), directed=False)
        return n == 1


def proximity_graph(metric: DistortedMetric, params: DmrParams) -> ProximityGraph:
    adj = metric.values < params.beta * params.M_tilde
    np.fill_diagonal(adj, False)
    return ProximityGraph(metric.leaves, adj)


def _local_splits(metric: DistortedMetric, params: DmrParams, iu: int, iv: int):
    """Index-level mini contractor: returns (ball indices, list of v-side index sets)."""
    W = metric.values
    radius = params.beta_prime * params.M_tilde
    ball = np.nonzero(np.maximum(W[iu], W[iv]) < radius)[0]
    phi = 0.5 * (W[iu, iv] + W[iu, ball] - W[iv, ball])
    # ties: smallest intersection point first, then smallest leaf id
    order = sorted(range(len(ball)), key=lambda t: (phi[t], metric.leaves[ball[t]]))
    members = [int(ball[t]) for t in order if ball[t] != iu]
    phis = [float(phi[t]) for t in order if ball[t] != iu]
    gap = params.alpha_prime * params.tau
    splits = []
    prev = 0.0
    for pos, (x, p) in enumerate(zip(members, phis)):
        if p - prev >= gap:
            splits.append(members[pos:])
        prev = p
    size = len(ball)
    # a one-leaf side is a terminal edge split; those are implied by the leaf set
    splits = [s for s in splits if 1 < len(s) < size - 1]
    return ball, splits


def mini_contractor(
    graph: ProximityGraph, metric: DistortedMetric, u: int, v: int, params: DmrParams
) -> list[Bipartition]:
    """Local splits of the ball around ``u`` and ``v``, ordered from ``u`` towards ``v``.

    Only splits with at least two ball members on each side are returned.
    """
    iu, iv = graph.index(u), graph.index(v)
    if not graph.adjacency[iu, iv]:
        raise ValidationError(f"({u}, {v}) is not an edge of the proximity graph")
    ball, splits = _local_splits(metric, params, iu, iv)
    ball_leaves = frozenset(graph.leaves[i] for i in ball)
    return [
        Bipartition.from_side((graph.leaves[i] for i in s), ball_leaves) for s in splits
    ]


def _extend(graph: ProximityGraph, side_u: np.ndarray, side_v: np.ndarray):
    """Assign every leaf to the side of a local split it connects to."""
    adj = graph.adjacency.copy()
    adj[np.ix_(side_u, side_v)] = False
    adj[np.ix_(side_v, side_u)] = False
    _, label = connected_components(csr_matrix(adj), directed=False)
    lab_u = set(label[side_u].tolist())
    lab_v = set(label[side_v].tolist())
    both = lab_u & lab_v
    out = np.zeros(len(graph.leaves), dtype=np.int8)
    for i, lab in enumerate(label):
        in_u, in_v = lab in lab_u, lab in lab_v
        if lab in both or not (in_u or in_v):
            what = "both sides" if lab in both else "neither side"
            raise ExtenderInconsistencyError(
                f"leaf {graph.leaves[i]} is connected to {what} of a local split"
            )
        out[i] = 1 if in_v else 0
    return out


def extender(
    graph: ProximityGraph, parts: list[Bipartition], u: int, v: int
) -> list[Bipartition]:
    """Extend local splits around ``u``, ``v`` to splits of every leaf."""
    leaves = frozenset(graph.leaves)
    out = []
    for bp in parts:
        if bp.leaves == leaves:
            out.append(bp)
            continue
        side_u, side_v = bp.side_of(u), bp.side_of(v)
        if side_u == side_v:
            raise ValidationError(f"local split {bp} does not separate {u} and {v}")
        iu = np.array(sorted(graph.index(x) for x in side_u))
        iv = np.array(sorted(graph.index(x) for x in side_v))
        flags = _extend(graph, iu, iv)
        out.append(
            Bipartition.from_side((graph.leaves[i] for i in np.nonzero(flags)[0]), leaves)
        )
    return out


@dataclass
class DmrReport:
    pairs_processed: int = 0
    local_splits: int = 0
    bipartitions: int = 0
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pairs_processed": self.pairs_processed,
            "local_splits": self.local_splits,
            "bipartitions_found": self.bipartitions,
            "failures": self.failures,
        }


def dmr_reconstruct(
    metric: DistortedMetric, params: DmrParams, report: DmrReport | None = None
) -> RoutingTree:
    """Reconstruct the routing tree from a distorted metric.

    Raises :class:`ReconstructionError` (never returns a guess) when the
    proximity graph is disconnected, a local split cannot be extended
    consistently, or the extended splits are mutually incompatible.
    """
    report = report if report is not None else DmrReport()
    graph = proximity_graph(metric, params)
    if not graph.is_connected():
        report.failures.append({"kind": "disconnected"})
        raise ReconstructionError(
            "proximity graph is disconnected; the distances are too short to span the tree"
        )
    n = len(metric.leaves)
    found: dict[int, tuple[int, int]] = {}
    iu_all, iv_all = np.nonzero(np.triu(graph.adjacency, 1))
    for iu, iv in zip(iu_all.tolist(), iv_all.tolist()):
        report.pairs_processed += 1
        ball, splits = _local_splits(metric, params, iu, iv)
        report.local_splits += len(splits)
        inside = np.zeros(n, dtype=bool)
        inside[ball] = True
        complete = bool(inside.all())
        pair = (metric.leaves[iu], metric.leaves[iv])
        for s in splits:
            side_v = np.array(sorted(s))
            if complete:
                flags = np.zeros(n, dtype=np.int8)
                flags[side_v] = 1
            else:
                side_u = np.array(sorted(set(ball.tolist()) - set(s)))
                try:
                    flags = _extend(graph, side_u, side_v)
                except ExtenderInconsistencyError as exc:
                    report.failures.append({"kind": "extender", "pair": list(pair), "detail": str(exc)})
                    raise ExtenderInconsistencyError(f"pair {pair}: {exc}", pairs=[pair]) from exc
            # canonical mask: the side away from leaf index 0
            mask = int("".join("1" if b else "0" for b in flags[::-1]), 2)
            if flags[0]:
                mask ^= (1 << n) - 1
            found.setdefault(mask, pair)

    leaves = metric.leaves
    parts = set()
    for mask in found:
        side = [leaves[i] for i in range(n) if mask >> i & 1]
        parts.add(Bipartition.from_side(side, leaves))
    report.bipartitions = len(parts)
    try:
        return tree_from_bipartitions(leaves, parts)
    except IncompatibleBipartitionsError as exc:
        a, b = exc.pair
        pairs = []
        for bp in (a, b):
            side = bp.side_b if leaves[0] in bp.side_a else bp.side_a
            mask = sum(1 << leaves.index(x) for x in side)
            pairs.append(found.get(mask))
        report.failures.append({"kind": "incompatible", "splits": [repr(a), repr(b)], "pairs": pairs})
        raise ReconstructionError(f"extended splits are incompatible: {a} vs {b}", pairs=pairs) from exc
