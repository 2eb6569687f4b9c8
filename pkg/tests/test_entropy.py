import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from apt_lab.entropy import (
    EntropyConfig,
    MultisetReference,
    RewardNormalizer,
    hypersphere_volume,
    intrinsic_rewards,
    multiset_rewards,
    particle_entropy,
)
from apt_lab.geometry import KDTREE

PLAIN1 = EntropyConfig(k=1, c=1.0, exponent_mode="plain")


def reward_oracle(z, k, c, e):
    """Straight-line formula over every pair of particles."""
    z = np.asarray(z, dtype=float).reshape(len(z), -1)
    out = []
    for i in range(len(z)):
        d = sorted((math.dist(z[i], z[j]), j) for j in range(len(z)) if j != i)[:k]
        out.append(math.log(c + sum(di ** e for di, _ in d) / k))
    return np.array(out)


def test_hypersphere_volume():
    assert_allclose(hypersphere_volume(1.0, 1), 2.0, rtol=1e-12)
    assert_allclose(hypersphere_volume(1.0, 2), math.pi, rtol=1e-12)
    assert_allclose(hypersphere_volume(1.0, 3), 4 * math.pi / 3, rtol=1e-12)
    assert hypersphere_volume(0.0, 7) == 0.0
    assert_allclose(hypersphere_volume(2.0, 2), 4 * math.pi, rtol=1e-12)
    with pytest.raises(ValueError):
        hypersphere_volume(-1.0, 2)


def test_worked_example():
    r = intrinsic_rewards([0.0, 1.0, 3.0], PLAIN1)
    assert_allclose(r, [math.log(2), math.log(2), math.log(3)], rtol=0, atol=1e-15)
    assert_allclose(particle_entropy([0.0, 1.0, 3.0], PLAIN1), 2.48490665, atol=1e-8)
    assert_allclose(particle_entropy([0.0, 1.0, 3.0], PLAIN1), reward_oracle([0, 1, 3], 1, 1, 1).sum(), atol=1e-12)


def test_identical_latents_give_zero():
    z = np.full((8, 3), 0.25)
    assert_array_equal(intrinsic_rewards(z, EntropyConfig(k=3)), np.zeros(8))
    assert particle_entropy(z, EntropyConfig(k=3)) == 0.0


def test_too_few_particles():
    with pytest.raises(ValueError):
        intrinsic_rewards(np.zeros((5, 2)), EntropyConfig(k=5))
    with pytest.raises(ValueError):
        particle_entropy(np.zeros((3, 2)), EntropyConfig(k=3, backend=KDTREE))


def test_config_validation():
    with pytest.raises(ValueError):
        EntropyConfig(k=0)
    with pytest.raises(ValueError):
        EntropyConfig(c=-1.0)
    with pytest.raises(ValueError):
        EntropyConfig(variant="median")
    with pytest.raises(ValueError):
        EntropyConfig(exponent_mode="square")


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("mode", ["nz", "plain"])
def test_rewards_match_oracle(seed, mode):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(30, 3))
    cfg = EntropyConfig(k=4, c=1.0, exponent_mode=mode)
    assert_allclose(intrinsic_rewards(z, cfg), reward_oracle(z, 4, 1.0, 3 if mode == "nz" else 1), rtol=1e-12)
    assert_allclose(intrinsic_rewards(z, cfg), intrinsic_rewards(z, EntropyConfig(4, 1.0, "averaged", mode, KDTREE)),
                    rtol=0, atol=0)


def test_large_exponent_stays_finite():
    z = np.random.default_rng(0).normal(scale=50, size=(40, 15))
    r = intrinsic_rewards(z, EntropyConfig(k=5))
    assert np.all(np.isfinite(r))
    assert_allclose(r, reward_oracle(z, 5, 1.0, 15), rtol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.floats(1.0, 10.0))
def test_scale_monotone_and_translation_invariant(seed, dim, alpha):
    rng = np.random.default_rng(seed)
    z = np.round(rng.normal(size=(20, dim)) * 16) / 16
    cfg = EntropyConfig(k=3)
    base = intrinsic_rewards(z, cfg)
    assert np.all(intrinsic_rewards(alpha * z, cfg) >= base)
    shift = np.round(rng.normal(size=dim) * 4) / 4
    assert_array_equal(intrinsic_rewards(z + shift, cfg), base)
    assert np.all(base >= 0)


def test_variant_consistency_k1():
    z = np.random.default_rng(3).random((25, 2))
    d = reward_oracle(z, 1, 0.0, 1)  # log d_i
    kth = particle_entropy(z, EntropyConfig(k=1, variant="kth"))
    assert_allclose(kth, 2 * d.sum(), rtol=1e-12)
    avg = particle_entropy(z, EntropyConfig(k=1, c=1.0))
    assert_allclose(avg, np.log1p(np.exp(2 * d)).sum(), rtol=1e-12)
    avg0 = particle_entropy(z, EntropyConfig(k=1, c=0.0))
    assert_allclose(avg0, kth, rtol=1e-12)


def test_decomposition():
    z = np.random.default_rng(9).normal(size=(100, 5))
    cfg = EntropyConfig(k=5)
    assert abs(particle_entropy(z, cfg) - math.fsum(intrinsic_rewards(z, cfg))) <= 1e-12


def test_uniform_beats_cluster():
    rng = np.random.default_rng(0)
    cfg = EntropyConfig(k=5)
    u = particle_entropy(rng.random((1000, 2)), cfg)
    g = particle_entropy(rng.normal(0.5, 0.01, size=(1000, 2)), cfg)
    assert u > g


def expand(ref, counts):
    return np.repeat(ref, counts, axis=0)


@pytest.mark.parametrize("seed", range(20))
def test_multiset_rewards_match_expanded(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    ref = rng.integers(0, 5, size=(n, 2)).astype(float)
    counts = rng.integers(0, 5, size=n)
    counts[0] = max(counts[0], 1)
    k = int(rng.integers(1, 4))
    if counts.sum() - 1 < k:
        counts[0] += k
    cfg = EntropyConfig(k=k, exponent_mode="plain")
    full = intrinsic_rewards(expand(ref, counts), cfg)
    first_copy = np.concatenate([[0], np.cumsum(counts)[:-1]])
    present = counts > 0
    got = MultisetReference(ref, cfg).rewards(counts)
    assert_allclose(got[present], full[first_copy[present]], rtol=1e-12)
    assert np.all(np.isnan(got[~present]))
    rows = np.flatnonzero(present)
    direct = multiset_rewards(ref[rows], ref, counts, cfg, self_rows=rows)
    assert_allclose(direct, full[first_copy[rows]], rtol=1e-12)


def test_normalizer_examples():
    norm = RewardNormalizer()
    assert_allclose(norm.normalize([2.0]), [1.0])
    assert_allclose(norm.normalize([4.0]), [4 / 3])
    fresh = RewardNormalizer()
    assert_array_equal(fresh.normalize([0.0, 0.0]), [0.0, 0.0])
    const = RewardNormalizer()
    for _ in range(100):
        assert_array_equal(const.normalize([5.0, 5.0]), [1.0, 1.0])


def test_normalizer_cumulative_mean_exact():
    rng = np.random.default_rng(1)
    norm = RewardNormalizer()
    chunks = [rng.exponential(size=int(rng.integers(1, 50))) * 10 ** rng.uniform(-3, 3) for _ in range(500)]
    for c in chunks:
        norm.update(c)
    values = np.concatenate(chunks)
    exact = math.fsum(values.tolist()) / values.size
    assert norm.count == values.size
    assert abs(norm.running_mean - exact) <= 1e-12 * abs(exact)


def test_normalizer_ema_and_errors():
    ema = RewardNormalizer(mode="ema", decay=0.5)
    ema.update([2.0, 4.0])
    assert ema.running_mean == 3.0
    with pytest.raises(ValueError):
        RewardNormalizer(mode="median")
    with pytest.raises(ValueError):
        RewardNormalizer().update([np.nan])
