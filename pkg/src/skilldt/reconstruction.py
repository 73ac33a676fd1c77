"""Zero-shot trajectory reconstruction and skill-diversity measurement.

Reconstruction reads only the states of a target trajectory: they are
encoded and quantized, the resulting index sequence becomes the commanded
skill schedule, and the evaluator's rollout loop (with its observed-skill
overwrite) replays it in the live environment.  Diversity is the set of
pairwise 1-Wasserstein distances between the observed-skill histograms of
each skill's rollouts, with ground metric |i-j|/(N-1) over index positions
so distances live in [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import torch

from .data import Trajectory
from .errors import ArgumentError
from .evaluation import RolloutRecord, Snapshot, rollout_skill
from .quantizer import quantize


def wasserstein_1d(p: np.ndarray, q: np.ndarray) -> float:
    """1-Wasserstein distance between two skill histograms in [0, 1].

    Equals the mean absolute CDF difference scaled by N/(N-1), i.e. optimal
    transport on the line with cost |i-j|/(N-1).
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ArgumentError(f"histogram shapes differ: {p.shape} vs {q.shape}")
    n = len(p)
    if n < 2:
        raise ArgumentError("histograms need at least 2 bins")
    for name, h in (("p", p), ("q", q)):
        if h.min() < -1e-9 or abs(h.sum() - 1.0) > 1e-6:
            raise ArgumentError(f"{name} is not a normalized histogram")
    cdf_gap = np.abs(np.cumsum(p - q))
    return float(cdf_gap[:-1].sum() / (n - 1))


def aggregate_histogram(indices: np.ndarray, num_skills: int) -> np.ndarray:
    """Normalized visit counts of skill indices over an episode."""
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise ArgumentError("cannot aggregate an empty index sequence")
    counts = np.bincount(indices, minlength=num_skills).astype(np.float64)
    return counts / counts.sum()


def winding_count(states: np.ndarray, center: np.ndarray) -> int:
    """Net number of revolutions of a 2-D path around `center`."""
    rel = np.asarray(states, dtype=np.float64)[:, :2] - np.asarray(center, dtype=np.float64)
    angles = np.arctan2(rel[:, 1], rel[:, 0])
    deltas = np.diff(angles)
    deltas = (deltas + np.pi) % (2.0 * np.pi) - np.pi
    return int(np.rint(deltas.sum() / (2.0 * np.pi)))


@dataclass
class ReconstructionReport:
    target: Trajectory
    record: RolloutRecord
    target_indices: np.ndarray  # (T,)
    target_histogram: np.ndarray  # (N,) aggregate over target
    rollout_histogram: np.ndarray  # (N,) aggregate over rollout
    endpoint_error: float
    histogram_distance: float


def reconstruct(
    snapshot: Snapshot,
    env,
    target: Trajectory,
    max_steps: int | None = None,
    seed: int = 0,
) -> ReconstructionReport:
    """Reproduce a target trajectory in the live env from its states alone."""
    if target.length < 2:
        raise ArgumentError("target trajectory must have at least 2 states")
    if target.states.shape[1] != snapshot.policy.config.state_dim:
        raise ArgumentError(
            f"target state dim {target.states.shape[1]} != "
            f"{snapshot.policy.config.state_dim}"
        )
    if max_steps is None:
        max_steps = target.length
    norm = ((target.states - snapshot.state_mean) / snapshot.state_std).astype(np.float32)
    with torch.no_grad():
        assign = quantize(snapshot.codebook, snapshot.encoder(torch.from_numpy(norm)))
    target_indices = assign.indices.numpy()

    record = rollout_skill(
        snapshot, env,
        skill_id=int(target_indices[0]),
        max_steps=max_steps,
        seed=seed,
        command_indices=target_indices,
    )
    n = snapshot.codebook.num_codes
    target_hist = aggregate_histogram(target_indices, n)
    rollout_hist = aggregate_histogram(record.observed_indices, n)
    endpoint_error = float(
        np.linalg.norm(
            record.states[-1].astype(np.float64) - target.states[-1].astype(np.float64)
        )
    )
    return ReconstructionReport(
        target=target,
        record=record,
        target_indices=target_indices,
        target_histogram=target_hist,
        rollout_histogram=rollout_hist,
        endpoint_error=endpoint_error,
        histogram_distance=wasserstein_1d(target_hist, rollout_hist),
    )


@dataclass
class DiversityReport:
    min_distance: float
    max_distance: float
    avg_distance: float
    pairwise: np.ndarray  # (N, N) symmetric, zero diagonal
    histograms: np.ndarray  # (N, N_skills) per-skill mean observed histograms


def diversity_table(
    snapshot: Snapshot,
    env,
    num_skills: int,
    seeds: list[int] | None = None,
    max_steps: int | None = None,
) -> DiversityReport:
    """Pairwise Wasserstein distances between every skill's rollout histogram."""
    if num_skills < 2:
        raise ArgumentError("diversity needs at least 2 skills")
    if seeds is None:
        seeds = [0]
    if max_steps is None:
        max_steps = env.spec.max_episode_steps
    per_skill = np.zeros((num_skills, num_skills), dtype=np.float64)
    for k in range(num_skills):
        acc = np.zeros(num_skills, dtype=np.float64)
        for seed in seeds:
            rec = rollout_skill(snapshot, env, k, max_steps, seed=seed)
            acc += aggregate_histogram(rec.observed_indices, num_skills)
        per_skill[k] = acc / len(seeds)
    pairwise = np.zeros((num_skills, num_skills), dtype=np.float64)
    dists = []
    for i, j in combinations(range(num_skills), 2):
        d = wasserstein_1d(per_skill[i], per_skill[j])
        pairwise[i, j] = pairwise[j, i] = d
        dists.append(d)
    return DiversityReport(
        min_distance=float(np.min(dists)),
        max_distance=float(np.max(dists)),
        avg_distance=float(np.mean(dists)),
        pairwise=pairwise,
        histograms=per_skill,
    )
