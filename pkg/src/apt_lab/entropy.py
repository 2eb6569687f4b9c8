"""Particle-based entropy and the k-NN intrinsic reward.

The estimator measures how spread out a set of latent particles is from
each particle's distances to its ``k`` nearest neighbours.  Constant
offsets of the classical estimator (the ``1/n`` factor, the bias term
``b(k)`` and the unit-ball volume ``pi^(d/2) / Gamma(d/2 + 1)``) do not
change what maximises it and are left out; :func:`hypersphere_volume` is
still provided so the volume formula can be checked on its own.

Per-particle rewards sum to the averaged entropy exactly, so
``particle_entropy(z, cfg) == sum(intrinsic_rewards(z, cfg))`` for the
averaged variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .geometry import BRUTE, as_points, build_index, knn_query, pairwise_sq_distances

AVERAGED = "averaged"
KTH_ONLY = "kth"
NZ_POWER = "nz"
PLAIN = "plain"


@dataclass(frozen=True)
class EntropyConfig:
    k: int = 5
    c: float = 1.0
    variant: str = AVERAGED
    exponent_mode: str = NZ_POWER
    backend: str = BRUTE

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ValueError(f"c must be finite and >= 0, got {self.c}")
        if self.variant not in (AVERAGED, KTH_ONLY):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.exponent_mode not in (NZ_POWER, PLAIN):
            raise ValueError(f"unknown exponent_mode {self.exponent_mode!r}")

    def exponent(self, dim: int) -> int:
        return dim if self.exponent_mode == NZ_POWER else 1


def hypersphere_volume(radius: float, dim: int) -> float:
    """Volume of a ``dim``-ball: ``r^d * pi^(d/2) / Gamma(d/2 + 1)``."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if int(dim) != dim or dim < 1:
        raise ValueError("dim must be a positive integer")
    if radius == 0:
        return 0.0
    log_v = dim * math.log(radius) + 0.5 * dim * math.log(math.pi) - gammaln(0.5 * dim + 1.0)
    return float(math.exp(log_v))


def log_mean_power(dist: np.ndarray, e: int, c: float, weights: np.ndarray | None = None) -> np.ndarray:
    """Row-wise ``log(c + sum_j w_j d_j^e / sum_j w_j)``.

    Evaluated as ``M^e * mean((d / M)^e)`` with ``M`` the row maximum, in
    log space, so ``d^e`` never has to be formed for large ``e``.
    """
    dist = np.asarray(dist, dtype=np.float64)
    if weights is None:
        weights = np.ones_like(dist)
    top = dist.max(axis=1)
    safe = np.where(top > 0, top, 1.0)
    scaled = (dist / safe[:, None]) ** e
    mean_scaled = (weights * scaled).sum(axis=1) / weights.sum(axis=1)
    with np.errstate(divide="ignore"):
        log_mean = e * np.log(safe) + np.log(mean_scaled)
        log_c = math.log(c) if c > 0 else -np.inf
    out = np.logaddexp(log_c, log_mean)
    return np.where(top > 0, out, log_c)


def _neighbors(points: np.ndarray, config: EntropyConfig):
    n = points.shape[0]
    if n <= config.k:
        raise ValueError(f"need more than k={config.k} particles, got {n}")
    index = build_index(points, config.backend)
    return knn_query(index, points, config.k, exclude_self=True)


def _knn_distances(z: np.ndarray, config: EntropyConfig) -> np.ndarray:
    if config.backend != BRUTE:
        return _neighbors(z, config).distances
    n, k = z.shape[0], config.k
    if n <= k:
        raise ValueError(f"need more than k={k} particles, got {n}")
    # Only the k smallest values matter here, so a partition replaces the
    # full index sort; sorting them reproduces NeighborList.distances.
    d2 = pairwise_sq_distances(z, z)
    np.fill_diagonal(d2, np.inf)
    return np.sqrt(np.sort(np.partition(d2, k - 1, axis=1)[:, :k], axis=1))


def intrinsic_rewards(batch_latents, config: EntropyConfig = EntropyConfig()) -> np.ndarray:
    """Reward per particle: ``log(c + mean_{j in kNN(i)} ||z_i - z_j||^e)``.

    Neighbours are searched within the batch itself, excluding each
    particle's own index.
    """
    z = as_points(batch_latents, "batch_latents")
    return log_mean_power(_knn_distances(z, config), config.exponent(z.shape[1]), config.c)


def particle_entropy(points, config: EntropyConfig = EntropyConfig()) -> float:
    z = as_points(points)
    e = config.exponent(z.shape[1])
    if config.variant == AVERAGED:
        return math.fsum(intrinsic_rewards(z, config))
    kth = _knn_distances(z, config)[:, -1]
    with np.errstate(divide="ignore"):
        return math.fsum(e * np.log(kth))


def multiset_rewards(queries, reference, counts, config: EntropyConfig, self_rows=None) -> np.ndarray:
    """Intrinsic rewards against a reference multiset of latents.

    ``reference[r]`` stands for ``counts[r]`` identical particles.  Row
    ``self_rows[i]`` (if given) loses one copy for query ``i``, which is
    how a query drawn from the multiset excludes itself.  The result equals
    :func:`intrinsic_rewards`-style rewards computed against the fully
    expanded particle list, at the cost of one distance per distinct row.
    """
    q = as_points(queries, "queries")
    ref = as_points(reference, "reference")
    if q.shape[1] != ref.shape[1]:
        raise ValueError("query and reference dimensions differ")
    counts = np.asarray(counts, dtype=np.int64)
    if counts.shape != (ref.shape[0],) or np.any(counts < 0):
        raise ValueError("counts must be one nonnegative integer per reference row")
    k = config.k
    cnt = np.broadcast_to(counts, (q.shape[0], ref.shape[0])).copy()
    if self_rows is not None:
        self_rows = np.asarray(self_rows, dtype=np.intp)
        rows = np.arange(q.shape[0])
        if np.any(cnt[rows, self_rows] < 1):
            raise ValueError("self row has no copy to exclude")
        cnt[rows, self_rows] -= 1
    if np.any(cnt.sum(axis=1) < k):
        raise ValueError(f"reference multiset holds fewer than k={k} particles")
    d2 = pairwise_sq_distances(q, ref)
    order = np.argsort(d2, axis=1, kind="stable")
    d_sorted = np.sqrt(np.take_along_axis(d2, order, axis=1))
    c_sorted = np.take_along_axis(cnt, order, axis=1)
    before = np.cumsum(c_sorted, axis=1) - c_sorted
    take = np.clip(k - before, 0, c_sorted)
    width = int(np.max(np.argmax(np.cumsum(take, axis=1) >= k, axis=1))) + 1
    return log_mean_power(d_sorted[:, :width], config.exponent(q.shape[1]), config.c, take[:, :width].astype(np.float64))


class MultisetReference:
    """Rewards of distinct particles against a multiset of themselves.

    ``latents[r]`` is the latent of distinct state ``r``.  Distances and
    their sort order are computed once; :meth:`rewards` then only needs the
    current multiplicities, so it suits a replay buffer whose counts change
    every step while the encoder stays fixed.  Results match
    :func:`multiset_rewards` with ``queries = reference = latents`` and
    ``self_rows = arange(n)``.
    """

    def __init__(self, latents, config: EntropyConfig):
        z = as_points(latents, "latents")
        self.config = config
        self.e = config.exponent(z.shape[1])
        d2 = pairwise_sq_distances(z, z)
        self.order = np.argsort(d2, axis=1, kind="stable")
        self.d_sorted = np.sqrt(np.take_along_axis(d2, self.order, axis=1))
        self.self_pos = np.argmax(self.order == np.arange(z.shape[0])[:, None], axis=1)

    def rewards(self, counts) -> np.ndarray:
        """Reward of every state that has at least one copy; nan otherwise."""
        counts = np.asarray(counts, dtype=np.int64)
        n, k = self.order.shape[0], self.config.k
        rows = np.arange(n)
        present = counts > 0
        if counts.sum() - 1 < k:
            raise ValueError(f"reference multiset holds fewer than k={k} other particles")
        c_sorted = counts[self.order]
        c_sorted[rows, self.self_pos] -= present
        width = min(n, 2 * k + 8)
        while True:
            cum = np.cumsum(c_sorted[:, :width], axis=1)
            if width == n or np.all(cum[present, -1] >= k):
                break
            width = min(n, 2 * width)
        take = np.clip(k - (cum - c_sorted[:, :width]), 0, c_sorted[:, :width])
        out = np.full(n, np.nan)
        out[present] = log_mean_power(self.d_sorted[present, :width], self.e, self.config.c,
                                      take[present].astype(np.float64))
        return out


CUMULATIVE = "cumulative"
EMA = "ema"


class RewardNormalizer:
    """Divides rewards by a running estimate of their mean.

    The default cumulative mode keeps the exact mean of every raw value
    ever submitted (compensated summation).  ``mode="ema"`` uses an
    exponential moving average instead.
    """

    def __init__(self, mode: str = CUMULATIVE, floor: float = 1e-8, decay: float = 0.99):
        if mode not in (CUMULATIVE, EMA):
            raise ValueError(f"unknown normalizer mode {mode!r}")
        if not floor > 0:
            raise ValueError("floor must be positive")
        self.mode = mode
        self.floor = floor
        self.decay = decay
        self.reset()

    def reset(self):
        self.count = 0
        self._sum = 0.0
        self._comp = 0.0
        self._ema = 0.0

    @property
    def running_mean(self) -> float:
        if self.mode == EMA:
            return self._ema
        if self.count == 0:
            return 0.0
        return (self._sum + self._comp) / self.count

    def update(self, raw) -> None:
        raw = np.asarray(raw, dtype=np.float64).ravel()
        if not np.all(np.isfinite(raw)):
            raise ValueError("raw rewards must be finite")
        if raw.size == 0:
            return
        if self.mode == EMA:
            ema = self._ema
            for i, x in enumerate(raw.tolist()):
                ema = x if self.count + i == 0 else self.decay * ema + (1.0 - self.decay) * x
            self._ema = ema
        else:
            # Neumaier step with the exactly rounded batch sum
            x = math.fsum(raw.tolist())
            t = self._sum + x
            if abs(self._sum) >= abs(x):
                self._comp += (self._sum - t) + x
            else:
                self._comp += (x - t) + self._sum
            self._sum = t
        self.count += raw.size

    def normalize(self, raw) -> np.ndarray:
        self.update(raw)
        return np.asarray(raw, dtype=np.float64) / max(self.running_mean, self.floor)
