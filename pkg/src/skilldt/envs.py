"""Deterministic toy environments and scripted multimodal dataset generators.

Environments are value-semantic: `step(state, action)` is pure, all math is
float32 so that generated trajectories replay bit-identically, and the
episode step limit is enforced by rollout loops (an env cannot see time).
Rewards are negative distance to the env's goal and are recorded for
reporting only; training never reads them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Trajectory
from .errors import ArgumentError

DT = np.float32(0.1)

# corner goals in mode order, then the looping route as mode 4
MAZE_CORNERS = np.array(
    [[0.75, 0.75], [-0.75, 0.75], [-0.75, -0.75], [0.75, -0.75]], dtype=np.float32
)
# loop circle sits above the start cell, clear of the radial corner routes
LOOP_CENTER = np.array([0.0, 0.5], dtype=np.float32)
LOOP_RADIUS = np.float32(0.32)
LOOP_WAYPOINTS = 24
WAYPOINT_TOL = 0.1


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_episode_steps: int


class LineEnv:
    """1-D point pushed along a line toward a target at +1 or -1."""

    def __init__(self, target: float = 1.0):
        self.target = np.float32(target)
        self.goal_tol = np.float32(0.05)
        self.bound = np.float32(1.2)
        self.spec = EnvSpec(
            state_dim=1,
            action_dim=1,
            action_low=np.array([-1.0], dtype=np.float32),
            action_high=np.array([1.0], dtype=np.float32),
            max_episode_steps=60,
        )

    def reset(self, seed: int = 0) -> np.ndarray:
        del seed  # defined origin
        return np.zeros(1, dtype=np.float32)

    def step(self, state: np.ndarray, action: np.ndarray):
        s = np.asarray(state, dtype=np.float32)
        a = np.clip(np.asarray(action, dtype=np.float32), -1.0, 1.0)
        ns = np.clip(s + a * DT, -self.bound, self.bound).astype(np.float32)
        dist = abs(float(ns[0]) - float(self.target))
        return ns, -dist, dist < float(self.goal_tol)


class PointMazeEnv:
    """2-D point in [-1, 1]^2 with velocity actions and optional U-wall.

    Dynamics: next = clip(s + a*dt); a move that would end inside a wall
    stops at the wall face (x resolved first, then y).  `done` fires inside
    the goal disc; the step limit is the caller's.
    """

    def __init__(self, goal: np.ndarray | None = None, walls: bool = False):
        self.goal = np.asarray(
            MAZE_CORNERS[0] if goal is None else goal, dtype=np.float32
        )
        self.goal_radius = np.float32(0.15)
        self.start_half_width = np.float32(0.02)
        # rects as (xmin, xmax, ymin, ymax); thickness > max step (0.1) so
        # a single step cannot tunnel through
        self.walls = (
            [np.array([-0.06, 0.06, -1.0, 0.35], dtype=np.float32)] if walls else []
        )
        self.spec = EnvSpec(
            state_dim=2,
            action_dim=2,
            action_low=np.array([-1.0, -1.0], dtype=np.float32),
            action_high=np.array([1.0, 1.0], dtype=np.float32),
            max_episode_steps=80,
        )

    def reset(self, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        w = float(self.start_half_width)
        return rng.uniform(-w, w, size=2).astype(np.float32)

    def _inside_wall(self, x: float, y: float) -> np.ndarray | None:
        for rect in self.walls:
            if rect[0] < x < rect[1] and rect[2] < y < rect[3]:
                return rect
        return None

    def step(self, state: np.ndarray, action: np.ndarray):
        s = np.asarray(state, dtype=np.float32)
        a = np.clip(np.asarray(action, dtype=np.float32), -1.0, 1.0)
        delta = a * DT
        nx = np.float32(np.clip(s[0] + delta[0], -1.0, 1.0))
        rect = self._inside_wall(float(nx), float(s[1]))
        if rect is not None:
            nx = rect[0] if delta[0] > 0 else rect[1]
        ny = np.float32(np.clip(s[1] + delta[1], -1.0, 1.0))
        rect = self._inside_wall(float(nx), float(ny))
        if rect is not None:
            ny = rect[2] if delta[1] > 0 else rect[3]
        ns = np.array([nx, ny], dtype=np.float32)
        dist = float(np.linalg.norm((ns - self.goal).astype(np.float64)))
        return ns, -dist, dist < float(self.goal_radius)


@dataclass
class GeneratorStyle:
    """Multimodal behavior spec for the scripted data collectors."""

    modes: int = 4
    noise_sigma: float = 0.05
    speed_cap: float = 1.0  # scripted per-axis speed limit
    hold_steps: int = 8  # steps parked at the final waypoint before ending


def _controller_step(pos: np.ndarray, target: np.ndarray, cap: float, noise: np.ndarray):
    err = (target - pos).astype(np.float32)
    a = np.clip(np.float32(4.0) * err, -np.float32(cap), np.float32(cap))
    return (a + noise.astype(np.float32)).astype(np.float32)


def _rollout_script(env, start: np.ndarray, targets, rng, style: GeneratorStyle):
    """Drive the env along a waypoint list; returns (states, actions, rewards).

    After the last waypoint is reached the controller parks there for
    `hold_steps` so the endpoint behavior is present in the data.
    """
    states, actions, rewards = [], [], []
    s = start
    max_steps = env.spec.max_episode_steps
    target_iter = iter(targets)
    target = next(target_iter)
    holding = False
    holds_left = style.hold_steps
    for _ in range(max_steps):
        noise = rng.normal(0.0, style.noise_sigma, size=env.spec.action_dim)
        a = _controller_step(s, target, style.speed_cap, noise)
        ns, r, done = env.step(s, a)
        states.append(s)
        actions.append(a)
        rewards.append(np.float32(r))
        s = ns
        if done:
            break
        if holding:
            holds_left -= 1
            if holds_left <= 0:
                break
        elif np.linalg.norm(target - s) < WAYPOINT_TOL:
            nxt = next(target_iter, None)
            if nxt is None:
                if style.hold_steps <= 0:
                    break
                holding = True
            else:
                target = nxt
    return np.stack(states), np.stack(actions), np.array(rewards, dtype=np.float32)


def _maze_waypoints(mode: int):
    if mode < 4:
        return [MAZE_CORNERS[mode]]
    # looping route: up to the circle's bottom, then once around it
    pts = []
    for k in range(LOOP_WAYPOINTS + 1):
        th = -0.5 * np.pi + 2.0 * np.pi * k / LOOP_WAYPOINTS
        pts.append(
            (LOOP_CENTER + LOOP_RADIUS * np.array(
                [np.cos(th), np.sin(th)], dtype=np.float32
            )).astype(np.float32)
        )
    return pts


def generate_dataset(
    env, style: GeneratorStyle, num_trajectories: int, seed: int
) -> tuple[Dataset, list[int]]:
    """Scripted multimodal collection; returns the dataset and per-episode modes.

    Modes are assigned round-robin.  PointMaze modes 0-3 head for the four
    corner goals; mode 4 is the looping route.  LineEnv modes 0/1 head for
    +1/-1.  Mode identity is returned (and written to run manifests by the
    CLI) as test-time ground truth; it is not stored in the dataset file.
    """
    if style.modes < 1:
        raise ArgumentError(f"modes must be >= 1, got {style.modes}")
    is_maze = isinstance(env, PointMazeEnv)
    max_modes = 5 if is_maze else 2
    if style.modes > max_modes:
        raise ArgumentError(
            f"{type(env).__name__} supports at most {max_modes} modes, got {style.modes}"
        )
    if num_trajectories < 1:
        raise ArgumentError("num_trajectories must be positive")

    rng = np.random.default_rng(seed)
    trajectories, modes = [], []
    for i in range(num_trajectories):
        mode = i % style.modes
        reset_seed = int(rng.integers(0, 2**31 - 1))
        start = env.reset(reset_seed)
        if is_maze:
            targets = _maze_waypoints(mode)
        else:
            targets = [np.array([1.0 if mode == 0 else -1.0], dtype=np.float32)]
        states, actions, rewards = _rollout_script(env, start, targets, rng, style)
        trajectories.append(
            Trajectory(states=states, actions=actions, rewards=rewards, episode_id=i)
        )
        modes.append(mode)
    name = f"{type(env).__name__.lower()}-{style.modes}mode-{num_trajectories}"
    return Dataset.from_trajectories(trajectories, name=name), modes
