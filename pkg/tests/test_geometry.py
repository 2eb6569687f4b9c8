import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_array_equal, assert_allclose

from apt_lab.geometry import (
    BRUTE,
    KDTREE,
    NeighborList,
    build_index,
    euclidean_distance,
    knn_query,
)


def oracle_knn(points, queries, k, exclude_self):
    """Plain double loop: sort by (distance, index)."""
    out_i, out_d = [], []
    for qi, q in enumerate(queries):
        cand = []
        for j, p in enumerate(points):
            if exclude_self and j == qi:
                continue
            cand.append((float(np.sqrt(sum((q[c] - p[c]) ** 2 for c in range(len(q))))), j))
        cand.sort()
        out_i.append([j for _, j in cand[:k]])
        out_d.append([d for d, _ in cand[:k]])
    return np.array(out_i), np.array(out_d)


def test_euclidean_examples():
    assert euclidean_distance([0.7, -2], [0.7, -2]) == 0.0
    assert euclidean_distance([0, 0], [3, 4]) == 5.0
    assert euclidean_distance([0], [3]) == 3.0
    with pytest.raises(ValueError):
        euclidean_distance([0, 0], [1])


@pytest.mark.parametrize("backend", [BRUTE, KDTREE])
def test_worked_example_k1(backend):
    idx = build_index([[0.0], [1.0], [3.0]], backend)
    nl = knn_query(idx, [[0.0], [1.0], [3.0]], 1, exclude_self=True)
    assert nl[0] == [(1, 1.0)]
    assert nl[1] == [(0, 1.0)]
    assert nl[2] == [(1, 2.0)]


@pytest.mark.parametrize("backend", [BRUTE, KDTREE])
def test_worked_example_k2(backend):
    idx = build_index([[0.0], [1.0], [3.0]], backend)
    assert knn_query(idx, [[0.0], [1.0], [3.0]], 2, exclude_self=True)[0] == [(1, 1.0), (2, 3.0)]


@pytest.mark.parametrize("backend", [BRUTE, KDTREE])
def test_duplicates_stay_eligible(backend):
    idx = build_index([[0.5, 0.5], [0.5, 0.5]], backend)
    nl = knn_query(idx, [[0.5, 0.5], [0.5, 0.5]], 1, exclude_self=True)
    assert nl[0] == [(1, 0.0)]
    assert nl[1] == [(0, 0.0)]


def test_single_point_index():
    idx = build_index([[1.0, 2.0]], BRUTE)
    assert len(idx) == 1
    assert knn_query(idx, [[0.0, 0.0]], 1)[0] == [(0, pytest.approx(np.sqrt(5)))]


def test_errors():
    with pytest.raises(ValueError):
        build_index(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        build_index([[0.0]], "ball")
    idx = build_index(np.zeros((3, 2)), KDTREE)
    with pytest.raises(ValueError):
        knn_query(idx, np.zeros((3, 2)), 3, exclude_self=True)
    with pytest.raises(ValueError):
        knn_query(idx, np.zeros((3, 2)), 0)
    with pytest.raises(ValueError):
        knn_query(idx, np.zeros((3, 3)), 1)
    with pytest.raises(ValueError):
        build_index([[np.nan, 0.0]])


def test_index_is_immutable_copy():
    pts = np.random.default_rng(0).random((50, 3))
    idx = build_index(pts, KDTREE)
    before = knn_query(idx, pts, 4, exclude_self=True)
    pts[:] = 0.0
    assert knn_query(idx, idx.points, 4, exclude_self=True) == before
    with pytest.raises(ValueError):
        idx.points[0, 0] = 1.0


@pytest.mark.parametrize("seed", range(6))
def test_tree_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    n, dim, k = int(rng.integers(20, 80)), int(rng.choice([1, 2, 5])), int(rng.choice([1, 3, 5]))
    pts = rng.integers(0, 4, size=(n, dim)).astype(float)  # many ties
    ref_i, ref_d = oracle_knn(pts, pts, k, True)
    for backend in (BRUTE, KDTREE):
        nl = knn_query(build_index(pts, backend), pts, k, exclude_self=True)
        assert_array_equal(nl.indices, ref_i)
        assert_allclose(nl.distances, ref_d, rtol=0, atol=1e-12)


def test_1000_points_5d_external_queries():
    rng = np.random.default_rng(7)
    pts = rng.random((1000, 5))
    qs = rng.random((200, 5))
    a = knn_query(build_index(pts, BRUTE), qs, 10)
    b = knn_query(build_index(pts, KDTREE), qs, 10)
    assert a == b


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(2, 60), st.integers(1, 4)),
           elements=st.floats(-100, 100, allow_nan=False)),
    st.integers(1, 5),
)
def test_backends_agree_and_sorted(pts, k):
    k = min(k, pts.shape[0] - 1)
    a = knn_query(build_index(pts, BRUTE), pts, k, exclude_self=True)
    b = knn_query(build_index(pts, KDTREE), pts, k, exclude_self=True)
    assert a == b
    keys = np.stack([a.distances, a.indices.astype(float)], axis=-1)
    for row in keys:
        assert all(tuple(row[j]) <= tuple(row[j + 1]) for j in range(k - 1))
    assert not np.any(a.indices == np.arange(pts.shape[0])[:, None])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_axis_permutation_and_translation(seed):
    rng = np.random.default_rng(seed)
    pts = np.round(rng.random((40, 3)) * 8) / 8  # dyadic grid keeps sums exact
    base = knn_query(build_index(pts, KDTREE), pts, 3, exclude_self=True)
    perm = pts[:, rng.permutation(3)]
    assert_array_equal(knn_query(build_index(perm, KDTREE), perm, 3, exclude_self=True).indices, base.indices)
    shifted = pts + np.array([4.0, -2.0, 0.5])
    moved = knn_query(build_index(shifted, KDTREE), shifted, 3, exclude_self=True)
    assert_array_equal(moved.indices, base.indices)
    assert_array_equal(moved.distances, base.distances)


def test_neighborlist_equality():
    a = NeighborList(np.array([[1]]), np.array([[0.5]]))
    assert a == NeighborList(np.array([[1]]), np.array([[0.5]]))
    assert a != NeighborList(np.array([[2]]), np.array([[0.5]]))
