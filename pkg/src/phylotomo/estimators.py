"""Leaf-sample statistics and the estimated variance metric."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .delays import SampleMatrix
from .errors import ValidationError


def _diff(samples: SampleMatrix, a: int, b: int) -> np.ndarray:
    if a == b:
        raise ValidationError("pair statistics need two distinct leaves")
    return samples.column(a) - samples.column(b)


def _centred(x: np.ndarray) -> np.ndarray:
    # offset by the first replica before taking the mean: numerically steadier,
    # and a constant shift of the data then leaves the result bit-identical
    # whenever the shift itself is exact (integer-valued delays)
    d = x - x[0]
    return d - d.mean()


def _finite(x: float) -> float:
    if not math.isfinite(x):
        raise ValidationError(f"estimator produced a non-finite value {x}")
    return float(x)


def delta1_hat(samples: SampleMatrix, a: int, b: int) -> float:
    """Sample mean of ``D_a - D_b``."""
    return _finite(_diff(samples, a, b).mean())


def delta_hat(samples: SampleMatrix, a: int, b: int, j: int) -> float:
    """Centred ``j``-th sample moment of ``D_a - D_b``.

    ``j == 2`` uses the unbiased ``1/(k-1)`` normaliser; higher orders use the
    plug-in ``1/k`` normaliser.
    """
    if j < 2:
        raise ValidationError("delta_hat needs j >= 2; use delta1_hat for the mean")
    x = _centred(_diff(samples, a, b))
    k = len(x)
    if j == 2:
        return _finite(np.dot(x, x) / (k - 1))
    return _finite(np.mean(x**j))


def phi_hat(samples: SampleMatrix, a: int, b: int, c: int, j: int) -> float:
    """Plug-in estimate of the third-leaf moment statistic for ``ab|c``.

    Averages ``X^(j-1) * (Y_ac + (-1)^(j-1) Y_bc)`` over replicas, where ``X``,
    ``Y_ac`` and ``Y_bc`` are the centred differences ``D_a - D_b``,
    ``D_a - D_c`` and ``D_b - D_c``. Its expectation is the sum of the ``j``-th
    central moments on the a-b path plus lower-order cross terms.
    """
    if j < 2:
        raise ValidationError("phi_hat needs j >= 2")
    if len({a, b, c}) != 3:
        raise ValidationError("phi_hat needs three distinct leaves")
    x = _diff(samples, a, b)
    yac = _diff(samples, a, c)
    ybc = _diff(samples, b, c)
    x = _centred(x)
    y = _centred(yac) + (-1) ** (j - 1) * _centred(ybc)
    return _finite(np.mean(x ** (j - 1) * y))


class SampleStatistics:
    """Memoised pair statistics over one sample matrix.

    Records every leaf pair whose statistic was asked for (and, separately,
    every third leaf used), so callers can audit which paths an algorithm
    touched.
    """

    def __init__(self, samples: SampleMatrix):
        self.samples = samples
        self._cache: dict[tuple, float] = {}
        self._lock = threading.Lock()
        self.queried: set[frozenset[int]] = set()
        self.triples: set[tuple[int, int, int]] = set()

    def _memo(self, key, fn):
        hit = self._cache.get(key)
        if hit is None:
            hit = fn()
            with self._lock:
                self._cache[key] = hit
        return hit

    def _note(self, *pairs):
        with self._lock:
            self.queried.update(frozenset(p) for p in pairs)

    def delta(self, a: int, b: int, j: int) -> float:
        self._note((a, b))
        return self._memo(("d", a, b, j), lambda: delta_hat(self.samples, a, b, j))

    def phi(self, a: int, b: int, c: int, j: int) -> float:
        self._note((a, b))
        with self._lock:
            self.triples.add((a, b, c))
        return self._memo(("p", a, b, c, j), lambda: phi_hat(self.samples, a, b, c, j))


@dataclass(frozen=True, eq=False)
class DistortedMetric:
    """Symmetric leaf-pair values in ``[0, +inf]`` with distortion parameters.

    ``tau`` is the accuracy on short distances and ``M_tilde`` the length
    scale below which that accuracy is promised.
    """

    leaves: tuple[int, ...]
    values: np.ndarray
    tau: float
    M_tilde: float
    k: int | None = None
    seed: int | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        n = len(self.leaves)
        if v.shape != (n, n):
            raise ValidationError(f"metric must be {n}x{n}, got {v.shape}")
        if np.isnan(v).any():
            raise ValidationError("metric contains NaN")
        np.fill_diagonal(v, 0.0)
        if not np.array_equal(v, v.T):
            raise ValidationError("metric must be symmetric")
        if (v < 0).any():
            raise ValidationError("metric values must be nonnegative")
        if not (self.tau > 0 and self.M_tilde > 0):
            raise ValidationError("tau and M_tilde must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "leaves", tuple(int(a) for a in self.leaves))
        object.__setattr__(self, "_idx", {a: i for i, a in enumerate(self.leaves)})

    def index(self, a: int) -> int:
        return self._idx[a]

    def __call__(self, u: int, v: int) -> float:
        return float(self.values[self._idx[u], self._idx[v]])


def estimated_variance_metric(
    samples: SampleMatrix, tau: float, M_tilde: float
) -> DistortedMetric:
    """Unbiased sample variance of ``D_a - D_b`` for every leaf pair."""
    x = samples.values - samples.values[0]
    x = x - x.mean(axis=0)
    cov = x.T @ x / (samples.k - 1)
    d = np.diag(cov)
    w = d[:, None] + d[None, :] - 2 * cov
    w = np.maximum((w + w.T) / 2, 0.0)
    if not np.all(np.isfinite(w)):
        raise ValidationError("variance metric is not finite")
    return DistortedMetric(samples.leaves, w, tau, M_tilde, k=samples.k, seed=samples.seed)
