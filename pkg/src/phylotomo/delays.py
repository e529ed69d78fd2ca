"""Edge delay distributions, delay models and multicast delay sampling."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from numbers import Real
from typing import Mapping, Union

import numpy as np

from .errors import ValidationError
from .tree import Edge, RoutingTree

# Replicas are drawn in fixed-size blocks, each from its own seed stream, so
# the matrix depends only on (seed, replica index) and not on --jobs.
BLOCK = 4096
_PROB_TOL = 1e-12


def _num(x):
    """JSON-friendly number parsing; ``"a/b"`` strings become exact fractions."""
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, bool) or not isinstance(x, Real):
        raise ValidationError(f"expected a number, got {x!r}")
    return x


def _dump(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return x


@dataclass(frozen=True)
class UniformDelay:
    """Uniform delay on ``[offset, offset + theta]``."""

    theta: Real
    offset: Real = 0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValidationError(f"uniform width must be positive, got {self.theta}")

    @property
    def lower(self):
        return self.offset

    @property
    def upper(self):
        return self.offset + self.theta

    @property
    def mean(self):
        return self.offset + self.theta / 2

    def central_moment(self, j: int):
        if j < 0:
            raise ValidationError("moment order must be >= 0")
        if j % 2:
            return 0 * self.theta
        return self.theta**j / (2**j * (j + 1))

    def shifted(self, mu) -> "UniformDelay":
        return replace(self, offset=self.offset + mu)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return float(self.offset) + float(self.theta) * rng.random(size)

    def to_dict(self) -> dict:
        return {"kind": "uniform", "theta": _dump(self.theta), "offset": _dump(self.offset)}


@dataclass(frozen=True)
class DiscreteDelay:
    """Delay taking value ``values[i]`` with probability ``probs[i]``."""

    values: tuple
    probs: tuple
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values, probs = tuple(self.values), tuple(self.probs)
        if len(values) != len(probs) or not values:
            raise ValidationError("values and probs must be nonempty and the same length")
        if len(set(values)) != len(values):
            raise ValidationError("support values must be distinct")
        if any(p < 0 or p > 1 for p in probs):
            raise ValidationError("probabilities must lie in [0, 1]")
        if abs(sum(probs) - 1) > _PROB_TOL:
            raise ValidationError(f"probabilities sum to {float(sum(probs))!r}, not 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        cum = np.cumsum(np.asarray(probs, dtype=float))
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def from_probs(cls, probs) -> "DiscreteDelay":
        """Distribution on ``{0, ..., len(probs) - 1}``."""
        return cls(tuple(range(len(probs))), tuple(probs))

    @property
    def lower(self):
        return min(v for v, p in zip(self.values, self.probs) if p > 0)

    @property
    def upper(self):
        return max(v for v, p in zip(self.values, self.probs) if p > 0)

    @property
    def mean(self):
        return sum(p * v for v, p in zip(self.values, self.probs))

    def central_moment(self, j: int):
        if j < 0:
            raise ValidationError("moment order must be >= 0")
        if j == 0:
            return sum(self.probs)
        mu = self.mean
        if j == 1:
            return 0 * mu
        return sum(p * (v - mu) ** j for v, p in zip(self.values, self.probs))

    def shifted(self, mu) -> "DiscreteDelay":
        return DiscreteDelay(tuple(v + mu for v in self.values), self.probs)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = np.searchsorted(self._cum, rng.random(size), side="right")
        return np.asarray(self.values, dtype=float)[np.minimum(idx, len(self.values) - 1)]

    def to_dict(self) -> dict:
        return {
            "kind": "discrete",
            "values": [_dump(v) for v in self.values],
            "probs": [_dump(p) for p in self.probs],
        }


DelayDistribution = Union[UniformDelay, DiscreteDelay]


def distribution_from_dict(d: Mapping) -> DelayDistribution:
    kind = d.get("kind")
    if kind == "uniform":
        return UniformDelay(_num(d["theta"]), _num(d.get("offset", 0)))
    if kind == "discrete":
        probs = [_num(p) for p in d["probs"]]
        values = [_num(v) for v in d["values"]] if "values" in d else list(range(len(probs)))
        return DiscreteDelay(tuple(values), tuple(probs))
    raise ValidationError(f"unknown delay distribution kind {kind!r}")


def central_moment(dist: DelayDistribution, j: int):
    """Exact ``E[(d - E d)^j]``; exact fractions in, exact fractions out."""
    return dist.central_moment(j)


@dataclass(frozen=True)
class DelayModel:
    """One delay distribution per edge, bounded by ``bound`` with variance >= ``floor``."""

    tree: RoutingTree
    dists: Mapping[Edge, DelayDistribution]
    bound: Real
    floor: Real

    def __post_init__(self):
        if not self.bound > 0 or not self.floor >= 0:
            raise ValidationError("delay bound M must be positive and variance floor f nonnegative")
        edges = set(self.tree.edges)
        keys = set(self.dists)
        if keys != edges:
            missing, extra = sorted(edges - keys), sorted(keys - edges)
            raise ValidationError(f"edge/distribution mismatch: missing {missing}, extra {extra}")
        for e, d in self.dists.items():
            if d.lower < 0 or d.upper > self.bound:
                raise ValidationError(f"edge {e}: support [{d.lower}, {d.upper}] outside [0, {self.bound}]")
            if d.central_moment(2) < self.floor:
                raise ValidationError(f"edge {e}: variance {d.central_moment(2)} below floor {self.floor}")
        object.__setattr__(self, "dists", dict(self.dists))

    def moment(self, e: Edge, j: int):
        return self.dists[e].central_moment(j)

    def moment_weights(self, j: int) -> dict[Edge, Real]:
        return {e: d.central_moment(j) for e, d in self.dists.items()}

    @property
    def is_discrete(self) -> bool:
        return all(isinstance(d, DiscreteDelay) for d in self.dists.values())

    def to_dict(self) -> dict:
        return {
            "M": _dump(self.bound),
            "f": _dump(self.floor),
            "edges": [
                {"edge": list(e), "below": sorted(self.tree.leaves_below(e[1])), **d.to_dict()}
                for e, d in self.dists.items()
            ],
        }


def uniform_model(tree: RoutingTree, theta=1.0) -> DelayModel:
    """Every edge uniform on ``[0, theta]``; ``M = theta``, ``f = theta^2 / 12``."""
    d = UniformDelay(theta)
    return DelayModel(tree, {e: d for e in tree.edges}, theta, d.central_moment(2))


def random_discrete_model(
    tree: RoutingTree,
    rng: np.random.Generator,
    max_support: int = 3,
    max_value: int = 3,
    max_weight: int = 5,
) -> DelayModel:
    """Random integer-valued delays with exact rational probabilities."""
    dists = {}
    for e in tree.edges:
        size = int(rng.integers(2, max_support + 1))
        values = sorted(int(v) for v in rng.choice(max_value + 1, size=size, replace=False))
        weights = [int(w) for w in rng.integers(1, max_weight + 1, size=size)]
        total = sum(weights)
        dists[e] = DiscreteDelay(tuple(values), tuple(Fraction(w, total) for w in weights))
    floor = min(d.central_moment(2) for d in dists.values())
    return DelayModel(tree, dists, max_value, floor)


def shift_means(model: DelayModel, shifts: Mapping[Edge, Real]) -> DelayModel:
    """Translate each edge distribution; central moments are unchanged."""
    dists = dict(model.dists)
    for e, mu in shifts.items():
        if e not in dists:
            raise ValidationError(f"unknown edge {e}")
        moved = dists[e].shifted(mu)
        if moved.lower < 0 or moved.upper > model.bound:
            raise ValidationError(
                f"shift {mu} moves edge {e} support to [{moved.lower}, {moved.upper}], outside [0, {model.bound}]"
            )
        dists[e] = moved
    return DelayModel(model.tree, dists, model.bound, model.floor)


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """``k`` replicas of the total delay at every leaf (source column included)."""

    leaves: tuple[int, ...]
    values: np.ndarray
    seed: int | None = None
    bound: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.leaves):
            raise ValidationError("sample matrix must be k x n_leaves")
        if values.shape[0] < 2:
            raise ValidationError(f"need k >= 2 replicas, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("sample matrix contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "leaves", tuple(int(a) for a in self.leaves))
        object.__setattr__(self, "_col", {a: i for i, a in enumerate(self.leaves)})

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def index(self, a: int) -> int:
        try:
            return self._col[a]
        except KeyError:
            raise ValidationError(f"leaf {a} not in sample matrix") from None

    def column(self, a: int) -> np.ndarray:
        return self.values[:, self.index(a)]


def _sample_block(model: DelayModel, seed: int, block: int, size: int, leaf_idx) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    tree = model.tree
    at = {tree.root: np.zeros(size)}
    for p, c in tree.edges:
        at[c] = at[p] + model.dists[(p, c)].sample(rng, size)
    return np.column_stack([at[a] for a in leaf_idx])


def sample_delays(model: DelayModel, k: int, seed: int, jobs: int = 1) -> SampleMatrix:
    """Draw ``k`` independent realisations of the multicast delay process."""
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    leaves = model.tree.leaves
    sizes = [min(BLOCK, k - start) for start in range(0, k, BLOCK)]
    work = [(model, seed, b, s, leaves) for b, s in enumerate(sizes)]
    if jobs > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            blocks = list(pool.map(lambda args: _sample_block(*args), work))
    else:
        blocks = [_sample_block(*args) for args in work]
    return SampleMatrix(leaves, np.vstack(blocks), seed=seed, bound=float(model.bound))
