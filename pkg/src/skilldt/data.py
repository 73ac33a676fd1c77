"""Offline trajectory datasets and the portable `.sdt` container.

File layout (all integers and floats little-endian):

    magic   b"SDT1"
    u32     header length in bytes
    bytes   UTF-8 JSON header:
            {"state_dim": S, "action_dim": A,
             "trajectories": [{"length": T, "has_rewards": bool}, ...]}
    then per trajectory, in header order:
            f32 states  (T*S, row-major)
            f32 actions (T*A, row-major)
            f32 rewards (T)            -- only when has_rewards

The terminal state of an episode is dropped at ingestion so every stored
state has a target action (len(states) == len(actions)).  The writer emits
a canonical header (sorted keys, compact separators) so save(load(path))
is byte-identical for files produced by this module.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, FormatError, ValidationError

MAGIC = b"SDT1"
STD_FLOOR = 1e-6


@dataclass(frozen=True)
class Trajectory:
    """One episode: aligned state/action sequences plus optional rewards."""

    states: np.ndarray  # (T, S) float32
    actions: np.ndarray  # (T, A) float32
    rewards: np.ndarray | None  # (T,) float32 or None
    episode_id: int

    def __post_init__(self):
        if self.states.ndim != 2 or self.actions.ndim != 2:
            raise ValidationError(
                f"episode {self.episode_id}: states/actions must be 2-D, got "
                f"{self.states.shape} / {self.actions.shape}"
            )
        if len(self.states) != len(self.actions):
            raise ValidationError(
                f"episode {self.episode_id}: {len(self.states)} states vs "
                f"{len(self.actions)} actions (terminal state must be dropped)"
            )
        if len(self.states) < 1:
            raise ValidationError(f"episode {self.episode_id}: empty trajectory")
        if self.rewards is not None and len(self.rewards) != len(self.actions):
            raise ValidationError(
                f"episode {self.episode_id}: rewards length {len(self.rewards)} "
                f"!= {len(self.actions)}"
            )

    @property
    def length(self) -> int:
        return len(self.states)


@dataclass
class Dataset:
    """Immutable collection of trajectories plus normalization statistics."""

    trajectories: list[Trajectory]
    state_dim: int
    action_dim: int
    state_mean: np.ndarray  # (S,) float32
    state_std: np.ndarray  # (S,) float32, elementwise-floored at STD_FLOOR
    name: str = ""

    @classmethod
    def from_trajectories(cls, trajectories: list[Trajectory], name: str = "") -> "Dataset":
        if not trajectories:
            raise ValidationError("dataset must contain at least one trajectory")
        state_dim = trajectories[0].states.shape[1]
        action_dim = trajectories[0].actions.shape[1]
        for t in trajectories:
            if t.states.shape[1] != state_dim:
                raise ValidationError(
                    f"episode {t.episode_id}: state dim {t.states.shape[1]} != {state_dim}"
                )
            if t.actions.shape[1] != action_dim:
                raise ValidationError(
                    f"episode {t.episode_id}: action dim {t.actions.shape[1]} != {action_dim}"
                )
        all_states = np.concatenate([t.states for t in trajectories], axis=0).astype(np.float64)
        mean = all_states.mean(axis=0)
        std = np.maximum(all_states.std(axis=0), STD_FLOOR)
        return cls(
            trajectories=list(trajectories),
            state_dim=state_dim,
            action_dim=action_dim,
            state_mean=mean.astype(np.float32),
            state_std=std.astype(np.float32),
            name=name,
        )

    def normalize(self, states: np.ndarray) -> np.ndarray:
        return ((states - self.state_mean) / self.state_std).astype(np.float32)

    @property
    def num_trajectories(self) -> int:
        return len(self.trajectories)

    def max_episode_length(self) -> int:
        return max(t.length for t in self.trajectories)


@dataclass
class ContextBatch:
    """Aligned fixed-length windows cut from trajectories, right-padded."""

    states: np.ndarray  # (B, K, S) float32, normalized; zeros at padding
    actions: np.ndarray  # (B, K, A) float32; zeros at padding
    timesteps: np.ndarray  # (B, K) int64; zeros at padding
    pad_mask: np.ndarray  # (B, K) bool, True = real step
    trajectory_ids: np.ndarray  # (B,) int64, index into dataset.trajectories
    start_offsets: np.ndarray  # (B,) int64


@dataclass
class DatasetStats:
    num_trajectories: int
    total_transitions: int
    state_dim: int
    action_dim: int
    avg_reward: float | None
    max_reward: float | None
    min_reward: float | None
    max_episode_length: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset to `path` in the portable container format."""
    header = {
        "action_dim": dataset.action_dim,
        "state_dim": dataset.state_dim,
        "trajectories": [
            {"has_rewards": t.rewards is not None, "length": t.length}
            for t in dataset.trajectories
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for t in dataset.trajectories:
            f.write(np.ascontiguousarray(t.states, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(t.actions, dtype="<f4").tobytes())
            if t.rewards is not None:
                f.write(np.ascontiguousarray(t.rewards, dtype="<f4").tobytes())


def load_dataset(path) -> Dataset:
    """Load a `.sdt` file, validating structure and computing normalization stats."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise FormatError(f"{path}: file too short to be a dataset container")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if 8 + header_len > len(raw):
        raise FormatError(f"{path}: declared header length {header_len} overruns file")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: header is not valid JSON ({e})") from e
    try:
        state_dim = int(header["state_dim"])
        action_dim = int(header["action_dim"])
        records = header["trajectories"]
    except (KeyError, TypeError) as e:
        raise FormatError(f"{path}: header missing required key ({e})") from e
    if state_dim < 1 or action_dim < 1:
        raise FormatError(f"{path}: non-positive dims ({state_dim}, {action_dim})")
    if not records:
        raise FormatError(f"{path}: header declares zero trajectories")

    offset = 8 + header_len
    trajectories = []
    for i, rec in enumerate(records):
        try:
            length = int(rec["length"])
            has_rewards = bool(rec["has_rewards"])
        except (KeyError, TypeError) as e:
            raise FormatError(f"{path}: trajectory record {i} malformed ({e})") from e
        if length < 1:
            raise FormatError(f"{path}: trajectory record {i} has length {length}")
        n_floats = length * (state_dim + action_dim) + (length if has_rewards else 0)
        end = offset + 4 * n_floats
        if end > len(raw):
            raise FormatError(f"{path}: trajectory record {i} payload overruns file")
        flat = np.frombuffer(raw, dtype="<f4", count=n_floats, offset=offset)
        offset = end
        pos = length * state_dim
        states = flat[:pos].reshape(length, state_dim).copy()
        actions = flat[pos : pos + length * action_dim].reshape(length, action_dim).copy()
        rewards = flat[pos + length * action_dim :].copy() if has_rewards else None
        trajectories.append(
            Trajectory(states=states, actions=actions, rewards=rewards, episode_id=i)
        )
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after last trajectory")

    name = str(path)
    return Dataset.from_trajectories(trajectories, name=name)


def sample_batch(
    dataset: Dataset, batch_size: int, context_len: int, rng_seed: int
) -> ContextBatch:
    """Sample `batch_size` windows of length `context_len`.

    Trajectory chosen uniformly, then a start step chosen uniformly within
    it; windows overrunning the episode end are right-padded.  States are
    normalized with the dataset statistics; padded positions carry zeros.
    Pure given (dataset, rng_seed).
    """
    if batch_size < 1:
        raise ArgumentError(f"batch_size must be positive, got {batch_size}")
    if context_len < 1:
        raise ArgumentError(f"context_len must be positive, got {context_len}")
    rng = np.random.default_rng(rng_seed)
    lengths = np.array([t.length for t in dataset.trajectories], dtype=np.int64)
    traj_idx = rng.integers(0, dataset.num_trajectories, size=batch_size)
    starts = rng.integers(0, lengths[traj_idx])

    B, K = batch_size, context_len
    states = np.zeros((B, K, dataset.state_dim), dtype=np.float32)
    actions = np.zeros((B, K, dataset.action_dim), dtype=np.float32)
    timesteps = np.zeros((B, K), dtype=np.int64)
    pad_mask = np.zeros((B, K), dtype=bool)
    for b in range(B):
        t = dataset.trajectories[traj_idx[b]]
        s = int(starts[b])
        n = min(K, t.length - s)
        states[b, :n] = dataset.normalize(t.states[s : s + n])
        actions[b, :n] = t.actions[s : s + n]
        timesteps[b, :n] = np.arange(s, s + n)
        pad_mask[b, :n] = True
    return ContextBatch(
        states=states,
        actions=actions,
        timesteps=timesteps,
        pad_mask=pad_mask,
        trajectory_ids=traj_idx.astype(np.int64),
        start_offsets=starts.astype(np.int64),
    )


def dataset_stats(dataset: Dataset) -> DatasetStats:
    """Summarize a dataset; reward fields are None when rewards are absent."""
    totals = [float(t.rewards.sum()) for t in dataset.trajectories if t.rewards is not None]
    have_all = len(totals) == dataset.num_trajectories and totals
    return DatasetStats(
        num_trajectories=dataset.num_trajectories,
        total_transitions=int(sum(t.length for t in dataset.trajectories)),
        state_dim=dataset.state_dim,
        action_dim=dataset.action_dim,
        avg_reward=float(np.mean(totals)) if have_all else None,
        max_reward=float(np.max(totals)) if have_all else None,
        min_reward=float(np.min(totals)) if have_all else None,
        max_episode_length=dataset.max_episode_length(),
    )
