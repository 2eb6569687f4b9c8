"""Run configuration, coverage and decay measurements, method comparisons
and the nearest-neighbour benchmark.

Configuration files are flat ``key = value`` text; ``#`` starts a comment.
See the README for the full key list.
"""

from __future__ import annotations

import json
import math
import os
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import agent as ag
from .entropy import EntropyConfig
from .environments import (
    COORDS,
    FIXED,
    FOUR_ROOMS_11,
    GridWorld,
    PointMass,
    TaskSpec,
    far_corner_task,
    load_layout,
    open_room_layout,
    parse_layout,
)
from .geometry import BRUTE, KDTREE, build_index
from .metrics import write_csv, write_metrics_csv
from .representation import AugmentConfig

SEED_ENV_VAR = "APT_LAB_SEED"


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text):
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


@dataclass
class RunConfig:
    label: str = "run"
    out_dir: str = "runs"
    seed: int | None = None
    seeds: tuple = (0,)
    # environment
    env: str = "grid"
    layout: str = "four_rooms"
    width: int = 10
    height: int = 10
    obs_mode: str = COORDS
    episode_length: int = 100
    start: str = FIXED
    goal: str = "far_corner"
    # representation
    encoder: str = ag.ENCODER_MLP
    latent_dim: int = 5
    hidden: tuple = (64, 64)
    projection_hidden: int = 128
    projection_out: int = 64
    temperature: float = 0.1
    contrastive_lr: float = 1e-3
    aug_sigma: float = 0.1
    aug_shift: float = 0.0
    encoder_train_every: int = 10
    # reward
    reward_source: str = ag.APT
    k: int = 5
    c: float = 1.0
    variant: str = "averaged"
    exponent_mode: str = "nz"
    backend: str = BRUTE
    reference: str = ag.REFERENCE_BATCH
    normalizer: str = "cumulative"
    count_beta: float = 0.1
    # pre-training loop
    total_steps: int = 100_000
    grad_steps: int = 2
    batch_size: int = 64
    min_buffer: int = 1_000
    buffer_capacity: int = 100_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_horizon: int = 0  # 0: 20% of total_steps
    alpha: float = 0.1
    gamma: float = 0.99
    log_interval: int = 1_000
    epoch_length: int = 10_000
    decay_threshold: float = 0.25
    # fine-tuning
    finetune: bool = False
    finetune_steps: int = 20_000
    finetune_min_buffer: int = 100
    finetune_epsilon_start: float = 1.0
    finetune_epsilon_end: float = 0.05
    finetune_epsilon_horizon: int = 500
    finetune_alpha: float = 0.1
    freeze_encoder: bool = False
    reinit_q: bool = False
    success_window: int = 10
    success_threshold: float = 0.8

    def validate(self) -> "RunConfig":
        try:
            self.train_config()
            if self.finetune:
                self.finetune_config()
            if self.env not in ("grid", "point_mass"):
                raise ValueError(f"unknown env {self.env!r}")
            env = self.make_env()
            if self.finetune:
                self.make_task(env)
            if not 0 < self.decay_threshold:
                raise ValueError("decay_threshold must be positive")
            if not self.seeds:
                raise ValueError("seeds must not be empty")
        except (ValueError, TypeError, OSError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def train_config(self) -> ag.TrainLoopConfig:
        return ag.TrainLoopConfig(
            total_steps=self.total_steps, grad_steps=self.grad_steps, batch_size=self.batch_size,
            min_buffer=self.min_buffer, buffer_capacity=self.buffer_capacity,
            epsilon_start=self.epsilon_start, epsilon_end=self.epsilon_end,
            epsilon_horizon=self.epsilon_horizon or None, alpha=self.alpha, gamma=self.gamma,
            reward_source=self.reward_source, reference=self.reference, count_beta=self.count_beta,
            entropy=EntropyConfig(self.k, self.c, self.variant, self.exponent_mode, self.backend),
            normalizer=self.normalizer, encoder=self.encoder, hidden=tuple(self.hidden),
            latent_dim=self.latent_dim, projection_hidden=self.projection_hidden,
            projection_out=self.projection_out, temperature=self.temperature,
            contrastive_lr=self.contrastive_lr, augment=AugmentConfig(self.aug_sigma, self.aug_shift),
            encoder_train_every=self.encoder_train_every, log_interval=self.log_interval,
            epoch_length=self.epoch_length,
        )

    def finetune_config(self) -> ag.FinetuneConfig:
        return ag.FinetuneConfig(
            total_steps=self.finetune_steps, grad_steps=self.grad_steps, batch_size=self.batch_size,
            min_buffer=self.finetune_min_buffer, buffer_capacity=self.buffer_capacity,
            epsilon_start=self.finetune_epsilon_start, epsilon_end=self.finetune_epsilon_end,
            epsilon_horizon=self.finetune_epsilon_horizon, alpha=self.finetune_alpha,
            freeze_encoder=self.freeze_encoder, reinit_q=self.reinit_q,
            encoder_train_every=self.encoder_train_every, success_window=self.success_window,
            success_threshold=self.success_threshold, log_interval=self.log_interval,
        )

    def make_env(self):
        if self.env == "point_mass":
            return PointMass(self.episode_length)
        if self.layout == "four_rooms":
            layout = parse_layout(FOUR_ROOMS_11)
        elif self.layout == "open_room":
            layout = parse_layout(open_room_layout(self.width, self.height))
        else:
            layout = load_layout(self.layout)
        return GridWorld(layout, self.episode_length, self.start, self.obs_mode)

    def make_task(self, env) -> TaskSpec:
        if not isinstance(env, GridWorld):
            raise ValueError("tasks are defined on grid environments only")
        if self.goal == "far_corner":
            return far_corner_task(env)
        x, y = _parse_int_list(self.goal)
        task = TaskSpec(((x, y),))
        env.with_task(task)
        return task

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        if os.environ.get(SEED_ENV_VAR):
            return int(os.environ[SEED_ENV_VAR])
        return 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["seeds"] = list(self.seeds)
        return d


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, text):
    kind = _FIELD_TYPES[key]
    if key in ("hidden", "seeds"):
        return _parse_int_list(text)
    if kind == "bool":
        return _parse_bool(text)
    if kind == "int":
        return int(text)
    if kind == "int | None":
        return None if text.strip().lower() in ("", "none") else int(text)
    if kind == "float":
        return float(text)
    return text.strip()


def parse_run_config(text: str, **overrides) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    for key, value in overrides.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = value
    return RunConfig(**values).validate()


def load_run_config(path, **overrides) -> RunConfig:
    return parse_run_config(Path(path).read_text(), **overrides)


def format_run_config(cfg: RunConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if value is None:
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def coverage(visited_state_ids, env) -> float:
    """Fraction of reachable states visited at least once."""
    if not isinstance(env, GridWorld):
        raise TypeError("coverage is defined for finite grid environments only")
    reachable = set(range(env.n_states))
    return len(set(visited_state_ids) & reachable) / len(reachable)


def epoch_means(records):
    """Reward-count-weighted mean raw intrinsic reward per epoch."""
    sums, counts = {}, {}
    for rec in records:
        if rec.reward_count:
            sums[rec.epoch] = sums.get(rec.epoch, 0.0) + rec.mean_raw_intrinsic_reward * rec.reward_count
            counts[rec.epoch] = counts.get(rec.epoch, 0) + rec.reward_count
    return [(e, sums[e] / counts[e]) for e in sorted(sums)]


@dataclass
class DecayResult:
    epochs: list
    first_mean: float
    last_mean: float
    ratio: float
    threshold: float
    passed: bool
    metrics: list = field(repr=False, default_factory=list)
    coverage: float = math.nan


def decay_summary(records, threshold=0.25) -> DecayResult:
    trace = epoch_means(records)
    if not trace:
        raise ValueError("no epoch carries intrinsic rewards; nothing to compare")
    first, last = trace[0][1], trace[-1][1]
    if first > 0:
        ratio = last / first
    else:
        ratio = 0.0 if last == 0 else math.inf
    return DecayResult(trace, first, last, ratio, threshold, ratio < threshold, list(records))


def reward_decay_experiment(config: RunConfig, seed: int | None = None) -> DecayResult:
    """Pre-train with the particle reward and compare first/last epoch rewards."""
    if config.reward_source != ag.APT:
        raise ValueError("the decay experiment needs reward_source = apt")
    env = config.make_env()
    if not isinstance(env, GridWorld):
        raise ValueError("the decay experiment needs a finite grid environment")
    if config.total_steps == 0:
        raise ValueError("a 0-step run has no epochs")
    art = ag.pretrain(env, config.train_config(), config.resolved_seed() if seed is None else seed)
    result = decay_summary(art.metrics, config.decay_threshold)
    result.coverage = coverage(art.visited, env)
    return result


PER_SEED_HEADER = ["method", "reward_source", "seed", "final_coverage", "unique_states_visited",
                   "first_epoch_reward", "last_epoch_reward", "decay_ratio",
                   "finetune_success_episode", "finetune_success_rate"]
AGGREGATE_STATS = ["final_coverage", "decay_ratio", "finetune_success_episode", "finetune_success_rate"]


@dataclass
class ComparisonSummary:
    rows: list
    aggregates: list

    def by_method(self, method):
        return [r for r in self.rows if r["method"] == method]


def run_method(config: RunConfig, seed: int) -> dict:
    """One (method, seed) cell: pre-train, then optionally fine-tune."""
    env = config.make_env()
    art = ag.pretrain(env, config.train_config(), seed)
    row = {"method": config.label, "reward_source": config.reward_source, "seed": seed,
           "final_coverage": coverage(art.visited, env) if isinstance(env, GridWorld) else math.nan,
           "unique_states_visited": len(art.visited)}
    try:
        decay = decay_summary(art.metrics, config.decay_threshold)
        row.update(first_epoch_reward=decay.first_mean, last_epoch_reward=decay.last_mean,
                   decay_ratio=decay.ratio)
    except ValueError:
        row.update(first_epoch_reward=math.nan, last_epoch_reward=math.nan, decay_ratio=math.nan)
    row.update(finetune_success_episode=math.nan, finetune_success_rate=math.nan)
    if config.finetune:
        task_env = env.with_task(config.make_task(env))
        source = None if config.reward_source == ag.NONE else art
        res = ag.finetune(source, task_env, config.finetune_config(), seed, config.train_config())
        ep = res.episodes_to_success_rate(config.success_window, config.success_threshold)
        row["finetune_success_episode"] = math.inf if ep is None else ep
        row["finetune_success_rate"] = float(np.mean(res.successes)) if res.successes else 0.0
    return row


def _aggregate(rows, methods):
    out = []
    for method in methods:
        mine = [r for r in rows if r["method"] == method]
        agg = {"method": method, "n_seeds": len(mine)}
        for stat in AGGREGATE_STATS:
            vals = [r[stat] for r in mine if not math.isnan(r[stat])]
            agg[f"mean_{stat}"] = float(np.mean(vals)) if vals else math.nan
            agg[f"median_{stat}"] = float(statistics.median(vals)) if vals else math.nan
        out.append(agg)
    return out


def aggregate_header():
    return ["method", "n_seeds"] + [f"{p}_{s}" for s in AGGREGATE_STATS for p in ("mean", "median")]


def compare(methods, seeds, out_dir=None) -> ComparisonSummary:
    """Run every (method, seed) pair; write per-seed and aggregate CSVs.

    ``methods`` are RunConfigs whose labels name the methods.
    """
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise ValueError("method labels must be unique")
    rows = []
    for cfg in methods:
        for seed in seeds:
            try:
                rows.append(run_method(cfg, seed))
            except Exception as exc:
                raise RuntimeError(f"run failed for method={cfg.label!r} seed={seed}: {exc}") from exc
    summary = ComparisonSummary(rows, _aggregate(rows, labels))
    if out_dir is not None:
        write_comparison(summary, out_dir)
    return summary


def write_comparison(summary: ComparisonSummary, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "per_seed.csv", PER_SEED_HEADER, [[r[h] for h in PER_SEED_HEADER] for r in summary.rows])
    header = aggregate_header()
    write_csv(out / "aggregate.csv", header, [[a[h] for h in header] for a in summary.aggregates])


def coverage_ordering(summary: ComparisonSummary, method="apt", baseline="none", min_fraction=0.8):
    """Paired-seed check: ``method`` coverage >= ``baseline`` coverage on at
    least ``min_fraction`` of shared seeds.  Returns (wins, n, passed)."""
    a = {r["seed"]: r["final_coverage"] for r in summary.by_method(method)}
    b = {r["seed"]: r["final_coverage"] for r in summary.by_method(baseline)}
    shared = sorted(set(a) & set(b))
    wins = sum(a[s] >= b[s] for s in shared)
    return wins, len(shared), bool(shared) and wins >= min_fraction * len(shared)


BENCH_HEADER = ["n", "dim", "backend", "k", "build_seconds", "seconds_per_query", "agrees_with_brute"]


def bench_knn(sizes, dims, k=5, seed=0, timing=True):
    """Time brute force against the k-d tree on uniform random points.

    Every cell is cross-checked: the tree's NeighborList must equal brute
    force exactly.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        for dim in dims:
            pts = rng.random((n, dim))
            kk = min(k, n - 1)
            results = {}
            for backend in (BRUTE, KDTREE):
                t0 = time.perf_counter()
                index = build_index(pts, backend)
                t1 = time.perf_counter()
                results[backend] = index.query(pts, kk, exclude_self=True)
                t2 = time.perf_counter()
                results[backend + "_times"] = (t1 - t0, (t2 - t1) / n)
            agree = results[BRUTE] == results[KDTREE]
            for backend in (BRUTE, KDTREE):
                build, per_query = results[backend + "_times"]
                rows.append({"n": n, "dim": dim, "backend": backend, "k": kk,
                             "build_seconds": build if timing else math.nan,
                             "seconds_per_query": per_query if timing else math.nan,
                             "agrees_with_brute": agree})
    return rows


def write_bench_csv(path, rows, timing=True) -> None:
    header = [h for h in BENCH_HEADER if timing or h not in ("build_seconds", "seconds_per_query")]
    write_csv(path, header, [[r[h] for h in header] for r in rows])


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_pretrain_outputs(out_dir, config: RunConfig, art: ag.PretrainedArtifacts, env, timing=True):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", art.metrics, timing)
    art.extras = {"run": config.to_dict()}
    ag.save_artifacts(art, out / "artifacts")
    summary = {"label": config.label, "seed": config.resolved_seed(),
               "total_steps": config.total_steps, "unique_states_visited": len(art.visited)}
    if isinstance(env, GridWorld):
        summary["coverage"] = coverage(art.visited, env)
    write_json(out / "summary.json", summary)
