"""Tabular agent: replay buffer, epsilon-greedy Q-learning, reward-free
pre-training with the particle-entropy reward, and sparse fine-tuning.

The training loop follows the usual off-policy recipe.  Every environment
step is stored without any reward; every update samples a mini-batch,
optionally trains the encoder on it, computes intrinsic rewards for the
batch's next-state latents and applies Q-learning updates with them.
Rewards are recomputed each time a transition is resampled.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .entropy import CUMULATIVE, EntropyConfig, MultisetReference, RewardNormalizer, intrinsic_rewards
from .metrics import MetricsRecord
from .representation import (
    AugmentConfig,
    EncoderParams,
    IdentityEncoder,
    OptimizerState,
    RandomProjectionEncoder,
    encode,
    init_encoder,
    init_projection,
    load_checkpoint,
    save_checkpoint,
    train_step,
)

APT = "apt"
COUNT = "count"
NONE = "none"
REWARD_SOURCES = (APT, COUNT, NONE)

REFERENCE_BATCH = "batch"
REFERENCE_BUFFER = "buffer"

ENCODER_MLP = "mlp"
ENCODER_IDENTITY = "identity"
ENCODER_RANDOM = "random"
ENCODERS = (ENCODER_MLP, ENCODER_IDENTITY, ENCODER_RANDOM)


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: int
    next_obs: np.ndarray
    done: bool = False
    state_id: int = -1
    next_state_id: int = -1
    extrinsic_reward: float | None = None


@dataclass
class TransitionBatch:
    obs: np.ndarray
    actions: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    state_ids: np.ndarray
    next_state_ids: np.ndarray
    rewards: np.ndarray  # nan where the reward was withheld
    indices: np.ndarray

    def __len__(self):
        return self.actions.shape[0]

    def __getitem__(self, i) -> Transition:
        r = self.rewards[i]
        return Transition(self.obs[i], int(self.actions[i]), self.next_obs[i], bool(self.dones[i]),
                          int(self.state_ids[i]), int(self.next_state_ids[i]),
                          None if math.isnan(r) else float(r))


class ReplayBuffer:
    """FIFO ring of transitions with uniform sampling (with replacement).

    When ``n_states`` is given the buffer also tracks how many stored
    transitions end in each state, which the buffer-wide reward needs.
    """

    def __init__(self, capacity: int = 100_000, n_states: int | None = None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.n_states = n_states
        self.state_counts = np.zeros(n_states, dtype=np.int64) if n_states else None
        self._pos = 0
        self._size = 0
        self._obs = None

    def __len__(self):
        return self._size

    def _allocate(self, obs_dim):
        cap = self.capacity
        self._obs = np.zeros((cap, obs_dim))
        self._next_obs = np.zeros((cap, obs_dim))
        self._actions = np.zeros(cap, dtype=np.int64)
        self._dones = np.zeros(cap, dtype=bool)
        self._sid = np.full(cap, -1, dtype=np.int64)
        self._next_sid = np.full(cap, -1, dtype=np.int64)
        self._rewards = np.full(cap, np.nan)

    def push(self, t: Transition) -> None:
        if self._obs is None:
            self._allocate(np.asarray(t.obs).shape[0])
        i = self._pos
        if self.state_counts is not None:
            if self._size == self.capacity:
                self.state_counts[self._next_sid[i]] -= 1
            self.state_counts[t.next_state_id] += 1
        self._obs[i] = t.obs
        self._next_obs[i] = t.next_obs
        self._actions[i] = t.action
        self._dones[i] = t.done
        self._sid[i] = t.state_id
        self._next_sid[i] = t.next_state_id
        self._rewards[i] = np.nan if t.extrinsic_reward is None else t.extrinsic_reward
        self._pos = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _gather(self, idx) -> TransitionBatch:
        return TransitionBatch(self._obs[idx], self._actions[idx], self._next_obs[idx], self._dones[idx],
                               self._sid[idx], self._next_sid[idx], self._rewards[idx], idx)

    def sample(self, n: int, rng, min_size: int = 1) -> TransitionBatch:
        if self._size < max(min_size, 1):
            raise ValueError(f"buffer holds {self._size} transitions, need at least {max(min_size, 1)}")
        return self._gather(rng.integers(self._size, size=n))

    def transitions(self):
        """Stored transitions, oldest first."""
        start = self._pos if self._size == self.capacity else 0
        order = (start + np.arange(self._size)) % self.capacity
        batch = self._gather(order)
        return [batch[i] for i in range(len(batch))]


def buffer_push(buffer: ReplayBuffer, transition: Transition) -> None:
    buffer.push(transition)


def buffer_sample(buffer: ReplayBuffer, n: int, rng, min_size: int = 1) -> TransitionBatch:
    return buffer.sample(n, rng, min_size)


class QTable:
    """State-action values; unseen entries are zero.

    Rows are plain Python lists: the sequential per-item update loop runs
    several times faster on lists than on numpy scalars.
    """

    def __init__(self, n_states: int, n_actions: int, alpha: float = 0.1, gamma: float = 0.99):
        if not 0 <= gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 <= alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.rows = [[0.0] * self.n_actions for _ in range(self.n_states)]

    @property
    def values(self) -> np.ndarray:
        return np.array(self.rows, dtype=np.float64).reshape(self.n_states, self.n_actions)

    @values.setter
    def values(self, arr):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (self.n_states, self.n_actions):
            raise ValueError(f"expected shape {(self.n_states, self.n_actions)}, got {arr.shape}")
        self.rows = arr.tolist()

    def __getitem__(self, key):
        s, a = key
        return self.rows[s][a]

    def copy(self, alpha=None) -> "QTable":
        q = QTable(self.n_states, self.n_actions, self.alpha if alpha is None else alpha, self.gamma)
        q.rows = [list(r) for r in self.rows]
        return q


def select_action(qtable: QTable, state_id: int, epsilon: float, rng) -> int:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(qtable.n_actions))
    row = qtable.rows[state_id]
    return row.index(max(row))


def q_update(qtable: QTable, batch: TransitionBatch, rewards) -> None:
    """Sequential Q-learning updates in batch order.

    ``Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') * (1 - done) - Q(s,a))``
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape != (len(batch),):
        raise ValueError(f"{rewards.shape[0] if rewards.ndim else 0} rewards for a batch of {len(batch)}")
    rows = qtable.rows
    alpha, gamma = qtable.alpha, qtable.gamma
    for s, a, s2, r, d in zip(batch.state_ids.tolist(), batch.actions.tolist(),
                              batch.next_state_ids.tolist(), rewards.tolist(), batch.dones.tolist()):
        row = rows[s]
        target = r if d else r + gamma * max(rows[s2])
        row[a] += alpha * (target - row[a])


class VisitCounter:
    def __init__(self, n_states: int, beta: float = 0.1):
        self.counts = np.zeros(n_states, dtype=np.int64)
        self.beta = float(beta)

    def bonus(self, state_ids) -> np.ndarray:
        """Current bonus ``beta / sqrt(c(s))`` without counting a visit."""
        c = np.maximum(self.counts[state_ids], 1)
        return self.beta / np.sqrt(c)


def count_bonus(counter: VisitCounter, state_id: int) -> float:
    """Record a visit to ``state_id`` and return ``beta / sqrt(c(s))``."""
    counter.counts[state_id] += 1
    return counter.beta / math.sqrt(counter.counts[state_id])


def linear_epsilon(step: int, start: float, end: float, horizon: int) -> float:
    if horizon <= 0 or step >= horizon:
        return end
    return start + (end - start) * (step / horizon)


@dataclass(frozen=True)
class TrainLoopConfig:
    total_steps: int = 100_000
    grad_steps: int = 2
    batch_size: int = 64
    min_buffer: int = 1_000
    buffer_capacity: int = 100_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_horizon: int | None = None  # None: 20% of total_steps
    alpha: float = 0.1
    gamma: float = 0.99
    reward_source: str = APT
    reference: str = REFERENCE_BATCH
    count_beta: float = 0.1
    entropy: EntropyConfig = EntropyConfig()
    normalizer: str = CUMULATIVE
    encoder: str = ENCODER_MLP
    hidden: tuple = (64, 64)
    latent_dim: int = 5
    projection_hidden: int = 128
    projection_out: int = 64
    temperature: float = 0.1
    contrastive_lr: float = 1e-3
    augment: AugmentConfig = AugmentConfig()
    encoder_train_every: int = 10
    log_interval: int = 1_000
    epoch_length: int = 10_000

    def __post_init__(self):
        positive = ("grad_steps", "batch_size", "buffer_capacity", "latent_dim", "projection_hidden",
                    "projection_out", "encoder_train_every", "log_interval", "epoch_length")
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.total_steps < 0 or self.min_buffer < 1:
            raise ValueError("total_steps must be >= 0 and min_buffer >= 1")
        if self.min_buffer > self.buffer_capacity:
            raise ValueError("min_buffer exceeds buffer_capacity")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.reward_source not in REWARD_SOURCES:
            raise ValueError(f"unknown reward_source {self.reward_source!r}")
        if self.reference not in (REFERENCE_BATCH, REFERENCE_BUFFER):
            raise ValueError(f"unknown reference {self.reference!r}")
        if self.encoder not in ENCODERS:
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.reward_source == APT:
            if self.reference == REFERENCE_BATCH and self.batch_size <= self.entropy.k:
                raise ValueError("batch_size must exceed k for the batch reward")
            if self.reference == REFERENCE_BUFFER and self.min_buffer <= self.entropy.k:
                raise ValueError("min_buffer must exceed k for the buffer reward")
        if self.encoder == ENCODER_MLP and self.batch_size < 2:
            raise ValueError("contrastive training needs batch_size >= 2")

    @property
    def horizon(self) -> int:
        if self.epsilon_horizon is not None:
            return self.epsilon_horizon
        return max(1, int(0.2 * self.total_steps))


@dataclass(frozen=True)
class FinetuneConfig:
    total_steps: int = 20_000
    grad_steps: int = 2
    batch_size: int = 64
    min_buffer: int = 100
    buffer_capacity: int = 100_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_horizon: int = 500
    alpha: float = 0.1
    freeze_encoder: bool = False
    reinit_q: bool = False
    encoder_train_every: int = 10
    success_window: int = 10
    success_threshold: float = 0.8
    log_interval: int = 1_000

    def __post_init__(self):
        if self.total_steps < 0 or self.grad_steps < 1 or self.batch_size < 1 or self.min_buffer < 1:
            raise ValueError("invalid fine-tuning step/batch sizes")
        if self.success_window < 1 or not 0 < self.success_threshold <= 1:
            raise ValueError("invalid success window/threshold")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def _rng_streams(seed):
    # env, action, replay sampling, augmentation, parameter init
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]


def make_encoder(kind: str, obs_dim: int, config: TrainLoopConfig, rng):
    if kind == ENCODER_MLP:
        enc = init_encoder(obs_dim, config.hidden, config.latent_dim, rng)
        proj = init_projection(config.latent_dim, config.projection_hidden, config.projection_out, rng)
        return enc, proj
    if kind == ENCODER_IDENTITY:
        return IdentityEncoder(obs_dim), None
    return RandomProjectionEncoder(obs_dim, config.latent_dim, int(rng.integers(2**32))), None


@dataclass
class PretrainedArtifacts:
    qtable: QTable
    encoder: object
    projection: object
    optimizer: OptimizerState | None
    buffer: ReplayBuffer | None
    metrics: list
    visited: set
    config: TrainLoopConfig
    normalizer: RewardNormalizer | None = None
    counter: VisitCounter | None = None
    extras: dict = field(default_factory=dict)


class _Interval:
    """Accumulates the quantities reported in one metrics record."""

    def __init__(self):
        self.raw = 0.0
        self.norm = 0.0
        self.count = 0
        self.losses = []
        self.returns = []

    def record(self, step, epoch, visited, n_states, t0, timing=True):
        rec = MetricsRecord(
            env_step=step,
            epoch=epoch,
            mean_raw_intrinsic_reward=self.raw / self.count if self.count else math.nan,
            mean_normalized_reward=self.norm / self.count if self.count else math.nan,
            reward_count=self.count,
            coverage_fraction=len(visited) / n_states if n_states else math.nan,
            unique_states_visited=len(visited),
            episode_return=float(np.mean(self.returns)) if self.returns else math.nan,
            contrastive_loss=float(np.mean(self.losses)) if self.losses else math.nan,
            wall_clock_ms=(time.perf_counter() - t0) * 1e3 if timing else math.nan,
        )
        self.__init__()
        return rec


def pretrain(env, config: TrainLoopConfig = TrainLoopConfig(), seed: int = 0) -> PretrainedArtifacts:
    """Reward-free pre-training.

    ``reward_source`` selects the intrinsic reward: ``apt`` (particle
    entropy of encoded next states), ``count`` (``beta / sqrt(c(s'))``) or
    ``none`` (uniform random actions, no learning).
    """
    if getattr(env, "task", None) is not None:
        raise ValueError("pre-training requires a reward-free environment (task=None)")
    finite = env.n_states is not None
    if not finite and config.reward_source == COUNT:
        raise ValueError("count bonus needs a finite state space")
    if not finite and config.reference == REFERENCE_BUFFER and config.reward_source == APT:
        raise ValueError("buffer-wide reference needs a finite state space")
    env_rng, act_rng, sample_rng, aug_rng, init_rng = _rng_streams(seed)

    n_states = env.n_states if finite else 1
    qtable = QTable(n_states, env.n_actions, config.alpha, config.gamma)
    encoder, projection = make_encoder(config.encoder, env.obs_dim, config, init_rng)
    optimizer = OptimizerState(lr=config.contrastive_lr) if projection is not None else None
    buffer = ReplayBuffer(config.buffer_capacity, env.n_states if finite else None)
    normalizer = RewardNormalizer(config.normalizer)
    counter = VisitCounter(n_states, config.count_beta) if finite else None
    obs_table = env.observation_table() if finite else None
    reference = None
    state_rewards = None

    visited = set()
    metrics = []
    interval = _Interval()
    t0 = time.perf_counter()
    learn = config.reward_source != NONE
    train_encoder = config.reward_source == APT and isinstance(encoder, EncoderParams)
    horizon = config.horizon

    state, obs = env.reset(env_rng)
    sid = env.state_id(state)
    if finite:
        visited.add(sid)
        count_bonus(counter, sid)
    for step in range(config.total_steps):
        eps = linear_epsilon(step, config.epsilon_start, config.epsilon_end, horizon) if learn else 1.0
        action = select_action(qtable, sid if finite else 0, eps, act_rng)
        next_state, next_obs, _, done = env.step(state, action)
        next_sid = env.state_id(next_state)
        buffer.push(Transition(obs, action, next_obs, env.is_terminal(next_state), sid, next_sid))
        if finite:
            visited.add(next_sid)
            count_bonus(counter, next_sid)

        state_rewards = None
        if learn and len(buffer) >= config.min_buffer:
            for g in range(config.grad_steps):
                batch = buffer.sample(config.batch_size, sample_rng, config.min_buffer)
                if train_encoder and g == 0 and step % config.encoder_train_every == 0:
                    loss = train_step(encoder, projection, optimizer, batch.next_obs, config.temperature,
                                      aug_rng, config.augment)
                    interval.losses.append(loss)
                    reference = state_rewards = None
                if config.reward_source == COUNT:
                    raw = counter.bonus(batch.next_state_ids)
                    norm = raw
                else:
                    if config.reference == REFERENCE_BUFFER:
                        # per-state rewards depend only on the buffer counts, which
                        # stay fixed within one environment step
                        if reference is None:
                            reference = MultisetReference(encode(encoder, obs_table), config.entropy)
                        if state_rewards is None:
                            state_rewards = reference.rewards(buffer.state_counts)
                        raw = state_rewards[batch.next_state_ids]
                    else:
                        raw = intrinsic_rewards(encode(encoder, batch.next_obs), config.entropy)
                    norm = normalizer.normalize(raw)
                q_update(qtable, batch, norm)
                interval.raw += float(raw.sum())
                interval.norm += float(norm.sum())
                interval.count += raw.size

        if done:
            state, obs = env.reset(env_rng)
        else:
            state, obs = next_state, next_obs
        sid = env.state_id(state)
        if finite and sid not in visited:
            visited.add(sid)
        env_step = step + 1
        if env_step % config.log_interval == 0 or env_step == config.total_steps:
            metrics.append(interval.record(env_step, (env_step - 1) // config.epoch_length, visited,
                                           env.n_states if finite else None, t0))

    return PretrainedArtifacts(qtable, encoder, projection, optimizer, buffer, metrics, visited, config,
                               normalizer, counter)


@dataclass
class FinetuneResult:
    episode_returns: list
    successes: list
    episode_end_steps: list
    metrics: list
    qtable: QTable
    encoder: object = None
    projection: object = None

    def episodes_to_success_rate(self, window: int = 10, threshold: float = 0.8):
        """First (1-based) episode whose trailing ``window`` success rate
        reaches ``threshold``; ``None`` if it never does."""
        flags = np.asarray(self.successes, dtype=np.float64)
        if flags.size < window:
            return None
        rates = np.convolve(flags, np.ones(window), mode="valid") / window
        hit = np.flatnonzero(rates >= threshold - 1e-12)
        return int(hit[0]) + window if hit.size else None

    def steps_to_success_rate(self, window: int = 10, threshold: float = 0.8):
        ep = self.episodes_to_success_rate(window, threshold)
        return None if ep is None else self.episode_end_steps[ep - 1]


def finetune(artifacts: PretrainedArtifacts | None, env, config: FinetuneConfig = FinetuneConfig(),
             seed: int = 0, pretrain_config: TrainLoopConfig | None = None) -> FinetuneResult:
    """Q-learning on the environment's sparse task reward.

    ``artifacts=None`` trains from scratch.  The pre-trained Q-table is
    copied (or zeroed with ``reinit_q``); the encoder keeps training on
    the contrastive loss unless ``freeze_encoder`` is set.  Intrinsic
    rewards play no part here.
    """
    task = getattr(env, "task", None)
    if task is None:
        raise ValueError("fine-tuning needs an environment with a task")
    if env.n_states is None:
        raise ValueError("fine-tuning needs a finite state space")
    pcfg = artifacts.config if artifacts is not None else (pretrain_config or TrainLoopConfig())
    if artifacts is not None and (artifacts.qtable.n_states != env.n_states
                                  or artifacts.qtable.n_actions != env.n_actions):
        raise ValueError("pre-trained Q-table does not match the task environment")
    env_rng, act_rng, sample_rng, aug_rng, init_rng = _rng_streams(seed)

    if artifacts is None or config.reinit_q:
        qtable = QTable(env.n_states, env.n_actions, config.alpha, pcfg.gamma)
    else:
        qtable = artifacts.qtable.copy(alpha=config.alpha)
    if artifacts is None:
        encoder, projection = make_encoder(pcfg.encoder, env.obs_dim, pcfg, init_rng)
        optimizer = OptimizerState(lr=pcfg.contrastive_lr) if projection is not None else None
    else:
        encoder = artifacts.encoder.copy() if isinstance(artifacts.encoder, EncoderParams) else artifacts.encoder
        projection = artifacts.projection.copy() if artifacts.projection is not None else None
        optimizer = OptimizerState(lr=pcfg.contrastive_lr) if projection is not None else None
    train_encoder = projection is not None and not config.freeze_encoder

    buffer = ReplayBuffer(config.buffer_capacity, env.n_states)
    returns, successes, end_steps, metrics = [], [], [], []
    visited = set()
    interval = _Interval()
    t0 = time.perf_counter()

    state, obs = env.reset(env_rng)
    sid = env.state_id(state)
    visited.add(sid)
    ep_return = 0.0
    for step in range(config.total_steps):
        eps = linear_epsilon(step, config.epsilon_start, config.epsilon_end, config.epsilon_horizon)
        action = select_action(qtable, sid, eps, act_rng)
        next_state, next_obs, reward, done = env.step(state, action)
        next_sid = env.state_id(next_state)
        terminal = env.is_terminal(next_state)
        buffer.push(Transition(obs, action, next_obs, terminal, sid, next_sid, reward))
        visited.add(next_sid)
        ep_return += reward

        if len(buffer) >= config.min_buffer:
            for g in range(config.grad_steps):
                batch = buffer.sample(config.batch_size, sample_rng, config.min_buffer)
                if train_encoder and g == 0 and step % config.encoder_train_every == 0:
                    interval.losses.append(train_step(encoder, projection, optimizer, batch.next_obs,
                                                      pcfg.temperature, aug_rng, pcfg.augment))
                q_update(qtable, batch, batch.rewards)

        if done:
            returns.append(ep_return)
            successes.append(bool(terminal))
            end_steps.append(step + 1)
            interval.returns.append(ep_return)
            ep_return = 0.0
            state, obs = env.reset(env_rng)
        else:
            state, obs = next_state, next_obs
        sid = env.state_id(state)
        env_step = step + 1
        if env_step % config.log_interval == 0 or env_step == config.total_steps:
            metrics.append(interval.record(env_step, 0, visited, env.n_states, t0))

    return FinetuneResult(returns, successes, end_steps, metrics, qtable, encoder, projection)


def _config_to_json(config) -> dict:
    d = asdict(config)
    d["hidden"] = list(config.hidden)
    return d


def config_from_json(d: dict) -> TrainLoopConfig:
    d = dict(d)
    d["entropy"] = EntropyConfig(**d["entropy"])
    d["augment"] = AugmentConfig(**d["augment"])
    d["hidden"] = tuple(d["hidden"])
    return TrainLoopConfig(**d)


def write_qtable_csv(path, qtable: QTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state_id", "action", "value"])
        for s, row in enumerate(qtable.rows):
            for a, v in enumerate(row):
                w.writerow([s, a, repr(float(v))])


def read_qtable_csv(path, alpha=0.1, gamma=0.99) -> QTable:
    entries = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            entries.append((int(row["state_id"]), int(row["action"]), float(row["value"])))
    n_states = max(e[0] for e in entries) + 1
    n_actions = max(e[1] for e in entries) + 1
    q = QTable(n_states, n_actions, alpha, gamma)
    for s, a, v in entries:
        q.rows[s][a] = v
    return q


def save_artifacts(artifacts: PretrainedArtifacts, directory) -> Path:
    """Write ``qtable.csv``, ``encoder.ckpt`` (trained encoders only) and
    ``config.json``.  The replay buffer is not persisted."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_qtable_csv(out / "qtable.csv", artifacts.qtable)
    if isinstance(artifacts.encoder, EncoderParams):
        save_checkpoint(out / "encoder.ckpt", artifacts.encoder, artifacts.projection)
    echo = {"train": _config_to_json(artifacts.config)}
    if isinstance(artifacts.encoder, RandomProjectionEncoder):
        echo["random_projection_seed"] = artifacts.encoder.seed
    echo.update(artifacts.extras)
    (out / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    return out


def load_artifacts(directory) -> PretrainedArtifacts:
    src = Path(directory)
    echo = json.loads((src / "config.json").read_text())
    config = config_from_json(echo["train"])
    qtable = read_qtable_csv(src / "qtable.csv", config.alpha, config.gamma)
    encoder = projection = None
    if (src / "encoder.ckpt").exists():
        encoder, projection = load_checkpoint(src / "encoder.ckpt")
    optimizer = OptimizerState(lr=config.contrastive_lr) if projection is not None else None
    art = PretrainedArtifacts(qtable, encoder, projection, optimizer, None, [], set(), config)
    art.extras = {k: v for k, v in echo.items() if k != "train"}
    return art


def with_overrides(config, **kwargs):
    return replace(config, **kwargs)
