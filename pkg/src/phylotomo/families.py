"""Parameter recovery from central moments for two bounded delay families.

* uniform on ``[0, theta]``: ``theta`` from the variance, clamped to a range;
* integer-valued on ``{0, ..., M}`` with integer mean: probabilities from the
  first ``2M`` central moments through a Vandermonde system.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ValidationError

log = logging.getLogger(__name__)

MAX_SUPPORT = 6


@dataclass(frozen=True)
class UniformFamilySpec:
    theta_lo: float
    theta_hi: float

    def __post_init__(self):
        if not 0 < self.theta_lo < self.theta_hi < math.inf:
            raise ValidationError("uniform family needs 0 < theta_lo < theta_hi < inf")


@dataclass(frozen=True)
class DiscreteFamilySpec:
    M: int
    p0_floor: float = 0.0

    def __post_init__(self):
        if isinstance(self.M, bool) or not isinstance(self.M, int) or self.M < 1:
            raise ValidationError("discrete family needs a positive integer M")
        if self.M > MAX_SUPPORT:
            raise ValidationError(f"M = {self.M} exceeds the conditioning cap {MAX_SUPPORT}")
        if not 0 <= self.p0_floor < 1:
            raise ValidationError("p0_floor must lie in [0, 1)")


def psi_uniform(w2: float, spec: UniformFamilySpec) -> float:
    """Width estimate ``sqrt(12 w2)`` clamped to ``[theta_lo, theta_hi]``."""
    if not math.isfinite(w2):
        raise ValidationError("variance estimate must be finite")
    theta = math.sqrt(12 * max(float(w2), 0.0))
    return min(max(theta, spec.theta_lo), spec.theta_hi)


def uniform_l1(theta: float, theta_hat: float, grid: int = 200_000) -> float:
    """L1 distance between two uniform densities, by midpoint-rule integration."""
    top = max(theta, theta_hat)
    h = top / grid
    x = (np.arange(grid) + 0.5) * h
    p = np.where(x < theta, 1 / theta, 0.0)
    q = np.where(x < theta_hat, 1 / theta_hat, 0.0)
    return float(np.abs(p - q).sum() * h)


def vandermonde_moment_solve(nodes: Sequence, rhs: Sequence) -> list:
    """Solve ``sum_i nodes[i]**j * z[i] = rhs[j]`` for ``j = 0..n-1``.

    Björck–Pereyra elimination: O(n^2), no pivoting, and exact when the
    inputs are fractions.
    """
    x = list(nodes)
    b = list(rhs)
    n = len(x) - 1
    if len(b) != len(x):
        raise ValidationError("need as many equations as nodes")
    if len(set(x)) != len(x):
        raise ValidationError("Vandermonde nodes must be distinct")
    for k in range(n):
        for i in range(n, k, -1):
            b[i] = b[i] - x[k] * b[i - 1]
    for k in range(n - 1, -1, -1):
        for i in range(k + 1, n + 1):
            b[i] = b[i] / (x[i] - x[i - k - 1])
        for i in range(k, n):
            b[i] = b[i] - b[i + 1]
    return b


def moment_matrix(M: int) -> np.ndarray:
    """The ``(2M+1) x (2M+1)`` matrix ``[i**j]`` over nodes ``-M..M``, rows ``j``."""
    nodes = np.arange(-M, M + 1, dtype=float)
    return np.vstack([nodes**j for j in range(2 * M + 1)])


def inverse_norm1(M: int) -> float:
    """Induced 1-norm of the inverse moment matrix."""
    return float(np.abs(np.linalg.inv(moment_matrix(M))).sum(axis=0).max())


def _clip01(v):
    return min(max(v, 0 * v), 0 * v + 1)


def psi_discrete(
    w: Sequence, spec: DiscreteFamilySpec, mu: int, tol: float = 1e-6
) -> list:
    """Probabilities on ``{0..M}`` from central moments ``w[0] = w2, ..., w[2M-2] = w_2M``.

    An optional extra entry ``w_(2M+1)`` is used only as a consistency check
    (logged when its residual exceeds ``tol``). Fraction inputs give exact
    fraction outputs.
    """
    M = spec.M
    if isinstance(mu, bool) or int(mu) != mu or not 0 <= mu <= M:
        raise ValidationError(f"integer mean mu must lie in 0..{M}, got {mu!r}")
    mu = int(mu)
    w = list(w)
    if len(w) not in (2 * M - 1, 2 * M):
        raise ValidationError(f"need moments of order 2..{2 * M} (optionally {2 * M + 1})")
    if not all(math.isfinite(float(x)) for x in w):
        raise ValidationError("moment estimates must be finite")
    exact = all(isinstance(x, (int, Fraction)) for x in w)
    one, zero = (Fraction(1), Fraction(0)) if exact else (1.0, 0.0)
    nodes = list(range(-M, M + 1))
    rhs = [one, zero] + [Fraction(x) if exact else float(x) for x in w[: 2 * M - 1]]
    centred = vandermonde_moment_solve(nodes, rhs)

    if len(w) == 2 * M:
        extra = sum(c * i ** (2 * M + 1) for c, i in zip(centred, nodes))
        if abs(float(extra - w[-1])) > tol:
            log.warning("moment of order %d inconsistent with the fit (residual %.3g)",
                        2 * M + 1, float(extra - w[-1]))

    probs = [_clip01(centred[i - mu + M]) if -M <= i - mu <= M else zero for i in range(M + 1)]
    total = sum(probs)
    if total <= 0:
        # nothing survived the clamp; fall back to a point mass at the mean
        probs = [one if i == mu else zero for i in range(M + 1)]
        total = one
    return [p / total for p in probs]
