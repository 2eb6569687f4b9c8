"""Deterministic grid worlds and a point-mass toy.

Grid layouts are plain text, one row per line::

    #  wall      .  free      S  start      G  goal

Cells are addressed as ``(x, y)`` with ``y = 0`` the top row.  Actions are
0 up, 1 right, 2 down, 3 left; a move into a wall or off the grid leaves
the agent where it is.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ACTIONS = ((0, -1), (1, 0), (0, 1), (-1, 0))
ACTION_NAMES = ("up", "right", "down", "left")

ONE_HOT = "onehot"
COORDS = "coords"
OCCUPANCY = "occupancy"
OBS_MODES = (ONE_HOT, COORDS, OCCUPANCY)

FIXED = "fixed"
UNIFORM = "uniform"


FOUR_ROOMS_11 = """\
S....#.....
.....#.....
...........
.....#.....
.....#.....
##.#####.##
.....#.....
.....#.....
...........
.....#.....
.....#....G
"""


def open_room_layout(width: int, height: int, start=(0, 0), goal=None) -> str:
    rows = [["."] * width for _ in range(height)]
    rows[start[1]][start[0]] = "S"
    if goal is not None:
        rows[goal[1]][goal[0]] = "G"
    return "\n".join("".join(r) for r in rows) + "\n"


@dataclass(frozen=True)
class Layout:
    width: int
    height: int
    walls: frozenset
    starts: tuple
    goals: tuple

    def is_free(self, cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height and (x, y) not in self.walls


def parse_layout(text: str) -> Layout:
    lines = [ln.rstrip("\r") for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("layout is empty")
    width = len(lines[0])
    walls, starts, goals = set(), [], []
    for y, line in enumerate(lines):
        if len(line) != width:
            raise ValueError(f"ragged layout: row {y} has {len(line)} cells, expected {width}")
        for x, ch in enumerate(line):
            if ch == "#":
                walls.add((x, y))
            elif ch == "S":
                starts.append((x, y))
            elif ch == "G":
                goals.append((x, y))
            elif ch != ".":
                raise ValueError(f"unknown layout character {ch!r} at ({x}, {y})")
    return Layout(width, len(lines), frozenset(walls), tuple(starts), tuple(goals))


def load_layout(path) -> Layout:
    return parse_layout(Path(path).read_text())


@dataclass(frozen=True)
class TaskSpec:
    """Sparse reward: 1 on entering a goal cell, else 0."""

    goals: tuple
    terminate_on_goal: bool = True


@dataclass(frozen=True)
class GridState:
    cell: tuple
    steps: int = 0
    done: bool = False


def _bfs(layout: Layout, sources):
    seen = set(sources)
    queue = deque(sources)
    while queue:
        x, y = queue.popleft()
        for dx, dy in ACTIONS:
            nxt = (x + dx, y + dy)
            if nxt not in seen and layout.is_free(nxt):
                seen.add(nxt)
                queue.append(nxt)
    return seen


class GridWorld:
    """Episodic grid MDP with deterministic moves.

    With ``task=None`` the environment is reward-free: ``step`` reports
    ``None`` as the reward.
    """

    def __init__(self, layout: Layout, episode_length=100, start=FIXED, obs_mode=COORDS,
                 task: TaskSpec | None = None):
        if episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if obs_mode not in OBS_MODES:
            raise ValueError(f"unknown observation mode {obs_mode!r}")
        if start not in (FIXED, UNIFORM):
            raise ValueError(f"unknown start distribution {start!r}")
        self.layout = layout
        self.episode_length = int(episode_length)
        self.start = start
        self.obs_mode = obs_mode
        if start == FIXED:
            if not layout.starts:
                raise ValueError("fixed start requires an 'S' cell in the layout")
            sources = layout.starts
        else:
            sources = tuple(
                (x, y) for y in range(layout.height) for x in range(layout.width) if layout.is_free((x, y))
            )
        for s in sources:
            if not layout.is_free(s):
                raise ValueError(f"start cell {s} is not free")
        reachable = _bfs(layout, list(sources))
        # row-major order over reachable cells gives stable state ids
        self.cells = sorted(reachable, key=lambda c: (c[1], c[0]))
        self.cell_id = {c: i for i, c in enumerate(self.cells)}
        self.start_cells = tuple(self.cells) if start == UNIFORM else tuple(layout.starts)
        self.task = None
        if task is not None:
            self.set_task(task)

    @classmethod
    def from_text(cls, text, **kwargs):
        return cls(parse_layout(text), **kwargs)

    @property
    def n_states(self) -> int:
        return len(self.cells)

    @property
    def n_actions(self) -> int:
        return len(ACTIONS)

    @property
    def obs_dim(self) -> int:
        if self.obs_mode == ONE_HOT:
            return self.n_states
        if self.obs_mode == COORDS:
            return 2
        return self.layout.width * self.layout.height

    def set_task(self, task: TaskSpec | None):
        if task is not None:
            if not task.goals:
                raise ValueError("task has no goal cells")
            for g in task.goals:
                if g not in self.cell_id:
                    raise ValueError(f"goal {g} is not reachable in this layout")
        self.task = task

    def with_task(self, task: TaskSpec | None) -> "GridWorld":
        env = GridWorld(self.layout, self.episode_length, self.start, self.obs_mode)
        env.set_task(task)
        return env

    def state_id(self, state: GridState) -> int:
        return self.cell_id[state.cell]

    def reset(self, rng=None):
        if len(self.start_cells) == 1:
            cell = self.start_cells[0]
        else:
            cell = self.start_cells[int(rng.integers(len(self.start_cells)))]
        state = GridState(cell, 0, False)
        return state, self.observe(state)

    def step(self, state: GridState, action: int):
        """Advance one step; returns ``(state, obs, reward, done)``."""
        if state.done:
            raise RuntimeError("episode finished; call reset()")
        if not 0 <= action < len(ACTIONS):
            raise ValueError(f"invalid action {action}")
        dx, dy = ACTIONS[action]
        nxt = (state.cell[0] + dx, state.cell[1] + dy)
        if not self.layout.is_free(nxt):
            nxt = state.cell
        steps = state.steps + 1
        reward = None
        reached = False
        if self.task is not None:
            reached = nxt in self.task.goals
            reward = 1.0 if reached else 0.0
        done = (reached and self.task.terminate_on_goal) or steps >= self.episode_length
        new = GridState(nxt, steps, done)
        return new, self.observe(new), reward, done

    def is_terminal(self, state: GridState) -> bool:
        """True when the episode ended at a goal rather than on time."""
        return self.task is not None and self.task.terminate_on_goal and state.cell in self.task.goals

    def observe(self, state: GridState, mode: str | None = None) -> np.ndarray:
        mode = mode or self.obs_mode
        x, y = state.cell
        if mode == ONE_HOT:
            obs = np.zeros(self.n_states)
            obs[self.cell_id[state.cell]] = 1.0
        elif mode == COORDS:
            obs = np.array([x / max(self.layout.width - 1, 1), y / max(self.layout.height - 1, 1)])
        elif mode == OCCUPANCY:
            obs = np.zeros(self.layout.width * self.layout.height)
            obs[y * self.layout.width + x] = 1.0
        else:
            raise ValueError(f"unknown observation mode {mode!r}")
        return obs

    def observation_table(self) -> np.ndarray:
        """Observation of every state, indexed by state id."""
        return np.stack([self.observe(GridState(c)) for c in self.cells])

    def enumerate_states(self):
        return [GridState(c) for c in self.cells]


@dataclass(frozen=True)
class PointMassState:
    position: tuple
    velocity: tuple = (0.0, 0.0)
    steps: int = 0
    done: bool = False


class PointMass:
    """Point in the unit square moved by fixed displacements.

    Actions: 0 +x, 1 -x, 2 +y, 3 -y, 4 no-op.  Positions are clipped to
    the box.  Reward-free; the observation is the position.
    """

    DELTA = 0.05

    def __init__(self, episode_length=100, start=(0.5, 0.5), delta=DELTA):
        if episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        self.episode_length = int(episode_length)
        self.start_position = tuple(float(v) for v in start)
        self.delta = float(delta)
        self.task = None
        self._moves = ((delta, 0.0), (-delta, 0.0), (0.0, delta), (0.0, -delta), (0.0, 0.0))

    n_actions = 5
    obs_dim = 2
    n_states = None

    def reset(self, rng=None):
        state = PointMassState(self.start_position)
        return state, self.observe(state)

    def step(self, state: PointMassState, action: int):
        if state.done:
            raise RuntimeError("episode finished; call reset()")
        if not 0 <= action < 5:
            raise ValueError(f"invalid action {action}")
        dx, dy = self._moves[action]
        x = min(max(state.position[0] + dx, 0.0), 1.0)
        y = min(max(state.position[1] + dy, 0.0), 1.0)
        vel = (x - state.position[0], y - state.position[1])
        steps = state.steps + 1
        new = PointMassState((x, y), vel, steps, steps >= self.episode_length)
        return new, self.observe(new), None, new.done

    def observe(self, state, mode=None):
        return np.array(state.position, dtype=np.float64)

    def is_terminal(self, state) -> bool:
        return False

    def state_id(self, state):
        return -1

    def enumerate_states(self):
        raise TypeError("point-mass state space is continuous; states cannot be enumerated")


def enumerate_states(env):
    return env.enumerate_states()


def four_rooms(obs_mode=COORDS, episode_length=100, start=FIXED, task=None) -> GridWorld:
    return GridWorld(parse_layout(FOUR_ROOMS_11), episode_length, start, obs_mode, task)


def open_room(width=10, height=10, obs_mode=COORDS, episode_length=100, start=FIXED, task=None) -> GridWorld:
    return GridWorld(parse_layout(open_room_layout(width, height)), episode_length, start, obs_mode, task)


def far_corner_task(env: GridWorld) -> TaskSpec:
    """Goal in the free cell farthest (by path length) from the start."""
    if env.layout.goals:
        return TaskSpec(tuple(env.layout.goals))
    dist = {}
    frontier = deque((c, 0) for c in env.start_cells)
    for c in env.start_cells:
        dist[c] = 0
    while frontier:
        (x, y), d = frontier.popleft()
        for dx, dy in ACTIONS:
            nxt = (x + dx, y + dy)
            if nxt not in dist and env.layout.is_free(nxt):
                dist[nxt] = d + 1
                frontier.append((nxt, d + 1))
    best = max(dist.items(), key=lambda kv: (kv[1], kv[0][1], kv[0][0]))
    return TaskSpec((best[0],))
