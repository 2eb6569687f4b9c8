"""Exact Euclidean k-nearest-neighbour search.

Two backends answer the same queries: a brute-force scan and a k-d tree.
Both compute squared distances with the same per-coordinate accumulation,
so their results are bitwise identical, including the tie order
(ascending distance, then ascending reference index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BRUTE = "brute"
KDTREE = "kdtree"
BACKENDS = (BRUTE, KDTREE)

LEAF_SIZE = 16
_QUERY_BLOCK = 512


def as_points(points, name="points") -> np.ndarray:
    """Validate a point set and return it as a float64 ``(n, dim)`` array.

    A 1-D input is read as ``n`` points in one dimension.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise ValueError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def euclidean_distance(a, b) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite coordinates")
    return float(np.sqrt(_sq_dist_rows(a[None, :], b)[0]))


def _sq_dist_rows(refs: np.ndarray, q: np.ndarray) -> np.ndarray:
    # Fixed left-to-right accumulation over coordinates; both backends
    # rely on this to produce identical floats.
    diff = refs[:, 0] - q[0]
    out = diff * diff
    for j in range(1, refs.shape[1]):
        diff = refs[:, j] - q[j]
        out += diff * diff
    return out


def pairwise_sq_distances(queries: np.ndarray, refs: np.ndarray) -> np.ndarray:
    diff = queries[:, None, 0] - refs[None, :, 0]
    out = diff * diff
    for j in range(1, refs.shape[1]):
        diff = queries[:, None, j] - refs[None, :, j]
        out += diff * diff
    return out


@dataclass(frozen=True)
class NeighborList:
    """k nearest neighbours per query, as parallel ``(m, k)`` arrays."""

    indices: np.ndarray
    distances: np.ndarray

    def __len__(self):
        return self.indices.shape[0]

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def __getitem__(self, i):
        return [(int(j), float(d)) for j, d in zip(self.indices[i], self.distances[i])]

    def __eq__(self, other):
        if not isinstance(other, NeighborList):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and np.array_equal(
            self.distances, other.distances
        )


class _Node:
    __slots__ = ("lo", "hi", "start", "stop", "left", "right")

    def __init__(self, lo, hi, start, stop):
        self.lo = lo
        self.hi = hi
        self.start = start
        self.stop = stop
        self.left = None
        self.right = None


class SpatialIndex:
    """Immutable nearest-neighbour index over a fixed reference point set."""

    def __init__(self, points, backend: str = KDTREE, leaf_size: int = LEAF_SIZE):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
        pts = as_points(points).copy()
        if pts.shape[0] == 0:
            raise ValueError("cannot index an empty point set")
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        pts.setflags(write=False)
        self.backend = backend
        self.points = pts
        self.leaf_size = leaf_size
        self._root = None
        if backend == KDTREE:
            self._order = np.arange(pts.shape[0])
            self._leaves = []
            self._root = self._build(0, pts.shape[0])
            self._order.setflags(write=False)
            self._sorted = pts[self._order]
            self._sorted.setflags(write=False)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def _build(self, start, stop):
        idx = self._order[start:stop]
        sub = self.points[idx]
        node = _Node(sub.min(axis=0), sub.max(axis=0), start, stop)
        n = stop - start
        spread = node.hi - node.lo
        axis = int(np.argmax(spread))
        if n <= self.leaf_size or spread[axis] == 0.0:
            self._leaves.append(node)
            return node
        mid = n // 2
        part = np.argpartition(sub[:, axis], mid, kind="introselect")
        self._order[start:stop] = idx[part]
        node.left = self._build(start, start + mid)
        node.right = self._build(start + mid, stop)
        return node

    def query(self, queries, k: int, exclude_self: bool = False) -> NeighborList:
        return knn_query(self, queries, k, exclude_self)


def build_index(points, backend: str = KDTREE) -> SpatialIndex:
    return SpatialIndex(points, backend)


def knn_query(index: SpatialIndex, queries, k: int, exclude_self: bool = False) -> NeighborList:
    """Return the ``k`` nearest reference points for every query.

    With ``exclude_self`` the queries must be the reference set itself
    (same length, row ``i`` is particle ``i``); row ``i`` then never lists
    index ``i``.  Distinct particles at distance zero remain eligible.
    """
    q = as_points(queries, "queries")
    if q.shape[1] != index.dim:
        raise ValueError(f"query dimension {q.shape[1]} != index dimension {index.dim}")
    n = len(index)
    k = int(k)
    if exclude_self:
        if q.shape[0] != n:
            raise ValueError("exclude_self requires the queries to be the reference set")
        if not 1 <= k <= n - 1:
            raise ValueError(f"k={k} out of range [1, {n - 1}] with self-exclusion")
    elif not 1 <= k <= n:
        raise ValueError(f"k={k} out of range [1, {n}]")

    if index.backend == BRUTE:
        d2, ids = _brute(index.points, q, k, exclude_self)
    else:
        d2, ids = _tree(index, q, k, exclude_self)
    return NeighborList(ids, np.sqrt(d2))


def _brute(refs, q, k, exclude_self):
    m = q.shape[0]
    out_d = np.empty((m, k))
    out_i = np.empty((m, k), dtype=np.intp)
    for s in range(0, m, _QUERY_BLOCK):
        e = min(s + _QUERY_BLOCK, m)
        d2 = pairwise_sq_distances(q[s:e], refs)
        if exclude_self:
            rows = np.arange(e - s)
            d2[rows, rows + s] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out_i[s:e] = order
        out_d[s:e] = np.take_along_axis(d2, order, axis=1)
    return out_d, out_i


def _tree(index, q, k, exclude_self):
    m = q.shape[0]
    leaves = index._leaves
    lo = np.stack([leaf.lo for leaf in leaves])
    hi = np.stack([leaf.hi for leaf in leaves])
    # squared gap from every query to every leaf box, shape (m, n_leaves)
    gap = np.maximum(np.maximum(lo[None, :, 0] - q[:, None, 0], q[:, None, 0] - hi[None, :, 0]), 0.0)
    box = gap * gap
    for j in range(1, q.shape[1]):
        gap = np.maximum(np.maximum(lo[None, :, j] - q[:, None, j], q[:, None, j] - hi[None, :, j]), 0.0)
        box += gap * gap

    best_d = np.full((m, k), np.inf)
    best_i = np.full((m, k), np.iinfo(np.intp).max, dtype=np.intp)
    done = np.zeros((m, len(leaves)), dtype=bool)

    def merge(li, qids):
        leaf = leaves[li]
        ref_ids = index._order[leaf.start:leaf.stop]
        d2 = pairwise_sq_distances(q[qids], index._sorted[leaf.start:leaf.stop])
        cand_i = np.broadcast_to(ref_ids, d2.shape)
        if exclude_self:
            d2[cand_i == qids[:, None]] = np.inf
        all_d = np.concatenate([best_d[qids], d2], axis=1)
        all_i = np.concatenate([best_i[qids], cand_i], axis=1)
        order = np.lexsort((all_i, all_d))[:, :k]
        best_d[qids] = np.take_along_axis(all_d, order, axis=1)
        best_i[qids] = np.take_along_axis(all_i, order, axis=1)
        done[qids, li] = True

    # Seed every query with its closest leaves until k candidates exist,
    # then sweep the remaining leaves in order of distance.
    rank = np.argsort(box, axis=1, kind="stable")
    for r in range(len(leaves)):
        need = np.flatnonzero(np.isinf(best_d[:, k - 1]))
        if need.size == 0:
            break
        first = rank[need, r]
        for li in np.unique(first):
            merge(li, need[first == li])
    for li in np.argsort(box.min(axis=0), kind="stable"):
        # <= keeps equal-distance candidates with smaller indices reachable
        qids = np.flatnonzero((box[:, li] <= best_d[:, k - 1]) & ~done[:, li])
        if qids.size:
            merge(li, qids)
    return best_d, best_i
