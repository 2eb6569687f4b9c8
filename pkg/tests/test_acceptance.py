"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are collected
in the "acceptance criteria" section at the end of the report.  The
coverage and fine-tuning criteria (8, 9) share one ten-seed comparison,
which takes most of the suite's runtime.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES

from apt_lab import experiments as ex
from apt_lab.entropy import EntropyConfig, RewardNormalizer, hypersphere_volume, intrinsic_rewards, particle_entropy
from apt_lab.geometry import BRUTE, KDTREE, build_index, knn_query
from apt_lab.representation import contrastive_loss_from_projections, finite_difference_check, init_encoder, init_projection

SEEDS = list(range(10))


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_knn_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(50):
        n = int(rng.integers(12, 2001))
        dim = int(rng.choice([1, 2, 5, 15]))
        k = int(rng.choice([1, 3, 5, 10]))
        if rng.random() < 0.3:
            pts = rng.integers(0, 6, size=(n, dim)).astype(float)  # heavy ties
        else:
            pts = rng.normal(size=(n, dim))
        a = knn_query(build_index(pts, BRUTE), pts, k, exclude_self=True)
        b = knn_query(build_index(pts, KDTREE), pts, k, exclude_self=True)
        mismatches += not (np.array_equal(a.indices, b.indices) and np.array_equal(a.distances, b.distances))
    elapsed = time.perf_counter() - t0
    report(1, mismatches == 0 and elapsed < 30,
           f"{50 - mismatches}/50 cases identical, {elapsed:.1f} s (limit 30 s)")


def test_criterion_02_hypersphere_volume():
    expected = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}
    errs = {d: abs(hypersphere_volume(1.0, d) - v) / v for d, v in expected.items()}
    report(2, max(errs.values()) <= 1e-12, f"max relative error {max(errs.values()):.2e} (tol 1e-12)")


def test_criterion_03_reward_worked_example():
    cfg = EntropyConfig(k=1, c=1.0, exponent_mode="plain")
    pts = [0.0, 1.0, 3.0]
    # brute-force oracle: nearest other point by direct scan
    oracle = [math.log(1.0 + min(abs(p - q) for j, q in enumerate(pts) if j != i)) for i, p in enumerate(pts)]
    r = intrinsic_rewards(pts, cfg)
    h = particle_entropy(pts, cfg)
    ok = np.allclose(r, [math.log(2), math.log(2), math.log(3)], rtol=0, atol=1e-12)
    ok &= np.allclose(r, oracle, rtol=0, atol=1e-15)
    ok &= abs(h - 2.48490665) <= 1e-8 and abs(h - math.fsum(oracle)) <= 1e-9
    report(3, bool(ok), f"rewards {np.round(r, 5).tolist()}, entropy {h:.10f}")


def test_criterion_04_scale_and_translation():
    rng = np.random.default_rng(4)
    cfg = EntropyConfig(k=5)
    scale_fail = trans_fail = 0
    for _ in range(100):
        n, dim = int(rng.integers(10, 200)), int(rng.integers(1, 6))
        z = rng.normal(size=(n, dim))
        alpha = float(rng.uniform(1.0, 4.0))
        scale_fail += not np.all(intrinsic_rewards(alpha * z, cfg) >= intrinsic_rewards(z, cfg))
        # dyadic coordinates and shift: every difference is exact in binary
        # floating point, so invariance can be checked with ==
        zd = np.round(z * 64) / 64
        shift = np.round(rng.normal(size=dim) * 16) / 16
        trans_fail += not np.array_equal(intrinsic_rewards(zd + shift, cfg), intrinsic_rewards(zd, cfg))
    report(4, scale_fail == 0 and trans_fail == 0,
           f"scale monotone {100 - scale_fail}/100, translation invariant {100 - trans_fail}/100")


def test_criterion_05_distribution_sensitivity():
    cfg = EntropyConfig(k=5, c=1.0)
    t0 = time.perf_counter()
    wins = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        wins += particle_entropy(rng.random((1000, 2)), cfg) > particle_entropy(rng.normal(0.5, 0.01, (1000, 2)), cfg)
    elapsed = time.perf_counter() - t0
    report(5, wins >= 95 and elapsed < 60, f"uniform > cluster in {wins}/100 seeds, {elapsed:.1f} s (limit 60 s)")


def test_criterion_06_contrastive_gradients():
    errs = []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        enc, proj = init_encoder(2, (3,), 3, rng), init_projection(3, 4, 3, rng)
        errs.append(finite_difference_check(enc, proj, rng.normal(size=(4, 2)), 1e-5, seed=seed))
    u = np.array([[0.6, 0.8], [0.6, 0.8]])
    loss = contrastive_loss_from_projections(u, u.copy(), 0.1)[0]
    ok = max(errs) < 1e-4 and abs(loss - math.log(2)) <= 1e-9
    report(6, ok, f"max FD relative errors {[f'{e:.1e}' for e in errs]}, identical-projection loss {loss:.12f}")


def decay_config():
    return ex.RunConfig(label="decay", layout="open_room", width=10, height=10, k=5,
                        total_steps=200_000, reference="buffer", epoch_length=10_000).validate()


def test_criterion_07_reward_decay():
    t0 = time.perf_counter()
    res = ex.reward_decay_experiment(decay_config(), seed=0)
    elapsed = time.perf_counter() - t0
    # regression fixture: the achieved ratio with this seed was 0.0 (the
    # last epoch has no state with fewer than k+1 buffer copies)
    report(7, res.passed and elapsed < 300,
           f"first-epoch mean {res.first_mean:.3e}, last-epoch mean {res.last_mean:.3e}, ratio {res.ratio:.3g} "
           f"(< 0.25), {elapsed:.0f} s (limit 300 s)")


@pytest.fixture(scope="module")
def four_rooms_comparison(tmp_path_factory):
    common = dict(layout="four_rooms", total_steps=100_000, finetune=True, finetune_steps=20_000)
    methods = [
        ex.RunConfig(label="apt", reward_source="apt", reference="buffer", **common).validate(),
        ex.RunConfig(label="random", reward_source="none", **common).validate(),
        ex.RunConfig(label="count", reward_source="count", **common).validate(),
    ]
    return ex.compare(methods, SEEDS, tmp_path_factory.mktemp("compare"))


def test_criterion_08_coverage_ordering(four_rooms_comparison):
    wins, n, ordered = ex.coverage_ordering(four_rooms_comparison, "apt", "random", min_fraction=0.8)
    apt_cov = [r["final_coverage"] for r in four_rooms_comparison.by_method("apt")]
    rnd_cov = [r["final_coverage"] for r in four_rooms_comparison.by_method("random")]
    report(8, ordered and min(apt_cov) >= 0.9,
           f"apt >= random coverage on {wins}/{n} seeds (need 8), min apt coverage {min(apt_cov):.3f} (need 0.9), "
           f"mean random coverage {np.mean(rnd_cov):.3f}")


def _episode(row):
    ep = row["finetune_success_episode"]
    return math.inf if ep is None or math.isnan(ep) else ep


def test_criterion_09_finetune_efficiency(four_rooms_comparison):
    by_seed = {m: {r["seed"]: _episode(r) for r in four_rooms_comparison.by_method(m)}
               for m in ("apt", "random", "count")}
    scratch = by_seed["random"]

    def wins(method):
        # a win needs the method to reach the success rate at all
        return sum(math.isfinite(by_seed[method][s]) and by_seed[method][s] <= scratch[s] for s in SEEDS)

    fmt = {m: ["-" if math.isinf(v) else int(v) for v in (by_seed[m][s] for s in SEEDS)] for m in by_seed}
    report(9, wins("apt") > len(SEEDS) // 2,
           f"apt-pretrained no later than scratch on {wins('apt')}/10 seeds (count baseline {wins('count')}/10); "
           f"episodes to 80% success apt {fmt['apt']}, scratch {fmt['random']}, count {fmt['count']}")


def test_criterion_10_normalizer():
    const = RewardNormalizer()
    first = const.normalize([5.0, 5.0, 5.0])
    later = [const.normalize([5.0] * m) for m in (1, 7, 2)]
    const_err = max(abs(v - 1.0) for arr in [first] + later for v in arr)

    rng = np.random.default_rng(10)
    norm = RewardNormalizer()
    total = []
    sizes = rng.integers(1, 4, size=1_000_000)
    values = rng.lognormal(0.0, 2.0, size=int(sizes.sum())) * rng.choice([1e-3, 1.0, 1e3], size=int(sizes.sum()))
    pos = 0
    for m in sizes.tolist():
        norm.update(values[pos:pos + m])
        pos += m
    exact = math.fsum(values.tolist()) / values.size
    rel = abs(norm.running_mean - exact) / exact
    report(10, const_err <= 1e-12 and rel <= 1e-12,
           f"constant stream max |out - 1| = {const_err:.1e}; cumulative mean relative error {rel:.1e} "
           f"over {sizes.size} updates")


CLI_CONFIG = """\
label = determinism
layout = open_room
width = 5
height = 5
total_steps = 3000
min_buffer = 300
log_interval = 500
epoch_length = 1000
reference = buffer
finetune_steps = 1500
finetune_min_buffer = 100
"""


def _cli(args):
    return subprocess.run([sys.executable, "-m", "apt_lab.cli", *args], capture_output=True)


def test_criterion_11_cli_determinism(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CLI_CONFIG)
    rnd = tmp_path / "random.cfg"
    rnd.write_text(CLI_CONFIG.replace("label = determinism", "label = random\nreward_source = none"))
    base = ["--config", str(cfg), "--seed", "11", "--no-timing"]
    commands = {
        "pretrain": (["pretrain", *base], ["metrics.csv", "summary.json", "artifacts/qtable.csv"]),
        "finetune": (["finetune", *base, "--from", str(tmp_path / "pretrain-1" / "artifacts")],
                     ["metrics.csv", "episodes.csv", "summary.json"]),
        "decay": (["decay", *base], ["decay.csv", "metrics.csv", "summary.json"]),
        "compare": (["compare", "--method", str(cfg), "--method", str(rnd), "--seeds", "0,1", "--no-timing"],
                    ["per_seed.csv", "aggregate.csv"]),
        "bench-knn": (["bench-knn", "--sizes", "50,200", "--dims", "2,5", "--no-timing"], ["bench_knn.csv"]),
        "validate-config": (["validate-config", "--config", str(cfg)], []),
    }
    identical = []
    for name, (args, files) in commands.items():
        runs = []
        for rep in (1, 2):
            out = tmp_path / f"{name}-{rep}"
            proc = _cli([*args, "--out", str(out)])
            runs.append((proc.returncode, proc.stdout, [(out / f).read_bytes() for f in files]))
        same = runs[0] == runs[1] and runs[0][0] in (0, 2)
        identical.append((name, same))
    bad = [n for n, ok in identical if not ok]
    report(11, not bad, f"{sum(ok for _, ok in identical)}/{len(identical)} commands byte-identical"
                        + (f"; differing: {bad}" if bad else ""))
