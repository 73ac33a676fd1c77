"""Convert D4RL-style HDF5 trajectory files to the portable `.sdt` container.

Expected HDF5 layout: datasets `observations` (steps x S), `actions`
(steps x A), optional `rewards` (steps,), and `terminals` and/or
`timeouts` boolean flags marking the last step of each episode.  Episodes
are cut at either flag (a timeout closes an episode without implying an
environment terminal); a trailing unflagged segment is not an episode and
is discarded.  The final step of each episode is dropped so every stored
state keeps a same-episode target action; episodes with fewer than two
steps are skipped.

The `.sdt` output (magic "SDT1", u32 header length, JSON header, then
per-trajectory little-endian f32 states/actions/rewards) is written
directly against the published container layout, so this tool has no
dependency on the training engine.
"""
from __future__ import annotations

import argparse
import json
import struct
import sys

import h5py
import numpy as np

MAGIC = b"SDT1"


class BridgeError(Exception):
    """Base class for converter failures (exit code 2)."""


class SchemaError(BridgeError):
    """Input file does not match the expected HDF5 layout."""


class ConversionError(BridgeError):
    """Input parsed but yielded nothing convertible."""


def split_episodes(done_flags: np.ndarray) -> list[tuple[int, int]]:
    """(start, end) index pairs, end inclusive, one per closed episode."""
    episodes = []
    start = 0
    for i, done in enumerate(done_flags):
        if done:
            episodes.append((start, i))
            start = i + 1
    return episodes


def load_h5(path):
    try:
        f = h5py.File(path, "r")
    except (OSError, IsADirectoryError) as e:
        raise SchemaError(f"cannot open {path}: {e}") from e
    with f:
        keys = sorted(f.keys())
        missing = [k for k in ("observations", "actions") if k not in f]
        if missing:
            raise SchemaError(
                f"{path}: missing keys {missing}; found {keys}"
            )
        if "terminals" not in f and "timeouts" not in f:
            raise SchemaError(
                f"{path}: need 'terminals' and/or 'timeouts'; found {keys}"
            )
        obs = np.asarray(f["observations"], dtype=np.float32)
        actions = np.asarray(f["actions"], dtype=np.float32)
        rewards = (
            np.asarray(f["rewards"], dtype=np.float32).reshape(-1)
            if "rewards" in f
            else None
        )
        n = len(obs)
        done = np.zeros(n, dtype=bool)
        for key in ("terminals", "timeouts"):
            if key in f:
                flags = np.asarray(f[key]).reshape(-1).astype(bool)
                if len(flags) != n:
                    raise SchemaError(
                        f"{path}: '{key}' length {len(flags)} != {n} steps"
                    )
                done |= flags
    if obs.ndim != 2 or actions.ndim != 2:
        raise SchemaError(
            f"{path}: observations/actions must be 2-D, got "
            f"{obs.shape} / {actions.shape}"
        )
    if len(actions) != n:
        raise SchemaError(
            f"{path}: actions length {len(actions)} != observations length {n}"
        )
    if rewards is not None and len(rewards) != n:
        raise SchemaError(f"{path}: rewards length {len(rewards)} != {n}")
    return obs, actions, rewards, done


def write_sdt(path, trajectories: list[dict], state_dim: int, action_dim: int) -> None:
    header = {
        "action_dim": action_dim,
        "state_dim": state_dim,
        "trajectories": [
            {"has_rewards": t["rewards"] is not None, "length": len(t["states"])}
            for t in trajectories
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for t in trajectories:
            f.write(np.ascontiguousarray(t["states"], dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(t["actions"], dtype="<f4").tobytes())
            if t["rewards"] is not None:
                f.write(np.ascontiguousarray(t["rewards"], dtype="<f4").tobytes())


def convert(h5_path, out_path, max_episodes: int | None = None) -> dict:
    """Convert one file; returns a summary dict (episodes, dims, steps)."""
    obs, actions, rewards, done = load_h5(h5_path)
    episodes = split_episodes(done)
    trajectories = []
    skipped_short = 0
    for start, end in episodes:
        if max_episodes is not None and len(trajectories) >= max_episodes:
            break
        if end - start + 1 < 2:  # dropping the final step would empty it
            skipped_short += 1
            continue
        trajectories.append(
            {
                "states": obs[start:end],  # final step of the episode dropped
                "actions": actions[start:end],
                "rewards": rewards[start:end] if rewards is not None else None,
            }
        )
    if not trajectories:
        raise ConversionError(
            f"{h5_path}: no complete episodes "
            f"({len(episodes)} closed segments, {skipped_short} too short)"
        )
    write_sdt(out_path, trajectories, obs.shape[1], actions.shape[1])
    return {
        "episodes": len(trajectories),
        "skipped_short": skipped_short,
        "state_dim": int(obs.shape[1]),
        "action_dim": int(actions.shape[1]),
        "total_steps": int(sum(len(t["states"]) for t in trajectories)),
        "has_rewards": rewards is not None,
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="d4rl-to-sdt",
        description="Convert a D4RL-style HDF5 trajectory file to .sdt",
    )
    parser.add_argument("input", help="HDF5 file with observations/actions/terminals")
    parser.add_argument("output", help="destination .sdt path")
    parser.add_argument("--max-episodes", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        summary = convert(args.input, args.output, args.max_episodes)
    except BridgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # unexpected runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
