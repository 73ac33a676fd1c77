"""Hindsight skill labels: per-state skill indices and future-skill histograms.

Labels are recomputed for the whole dataset before every training
iteration under the current encoder/codebook snapshot, because skill
representations drift while the encoder trains.  Histogram row t is the
normalized count of skill indices over steps t..T-1, built as a reverse
cumulative sum of one-hot rows; the last row is exactly one-hot.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data import Dataset, Trajectory
from .errors import ArgumentError
from .quantizer import SkillCodebook, quantize


@dataclass
class LabeledTrajectory:
    """A trajectory plus its skill labels under one quantizer snapshot."""

    base: Trajectory
    skill_indices: np.ndarray  # (T,) int64
    skill_embeddings: np.ndarray  # (T, d) float32
    histograms: np.ndarray  # (T, N) float32, each row sums to 1

    @property
    def length(self) -> int:
        return self.base.length


def generate_histograms(skill_indices: np.ndarray, num_skills: int) -> np.ndarray:
    """Future-skill distribution per step: reverse-cumulative one-hot counts,
    each row normalized by its own sum (row t sums to T-t before scaling).

    Returns float64 (T, N); callers store float32.
    """
    skill_indices = np.asarray(skill_indices, dtype=np.int64)
    if skill_indices.ndim != 1 or len(skill_indices) == 0:
        raise ArgumentError("skill_indices must be a nonempty 1-D sequence")
    if skill_indices.min() < 0 or skill_indices.max() >= num_skills:
        raise ArgumentError(
            f"skill index out of range [0, {num_skills}): "
            f"[{skill_indices.min()}, {skill_indices.max()}]"
        )
    T = len(skill_indices)
    one_hot = np.zeros((T, num_skills), dtype=np.float64)
    one_hot[np.arange(T), skill_indices] = 1.0
    suffix = np.cumsum(one_hot[::-1], axis=0)[::-1]
    return suffix / suffix.sum(axis=1, keepdims=True)


def relabel_dataset(
    dataset: Dataset, encoder: torch.nn.Module, codebook: SkillCodebook
) -> list[LabeledTrajectory]:
    """Label every trajectory with skills under the current snapshot.

    Pure function of (dataset, snapshot); previous labels are simply
    replaced by the caller.
    """
    all_states = np.concatenate([t.states for t in dataset.trajectories], axis=0)
    normed = torch.from_numpy(dataset.normalize(all_states))
    with torch.no_grad():
        latents = encoder(normed)
        assign = quantize(codebook, latents)
    indices = assign.indices.numpy()
    embeds = assign.embeddings.to(torch.float32).numpy()

    labeled = []
    offset = 0
    for t in dataset.trajectories:
        idx = indices[offset : offset + t.length]
        emb = embeds[offset : offset + t.length]
        offset += t.length
        hist = generate_histograms(idx, codebook.num_codes).astype(np.float32)
        labeled.append(
            LabeledTrajectory(
                base=t,
                skill_indices=idx.copy(),
                skill_embeddings=emb.copy(),
                histograms=hist,
            )
        )
    return labeled


def slice_labels(
    labeled: LabeledTrajectory, start: int, context_len: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Cut an aligned (histograms, embeddings, indices, pad_mask) window.

    Right-padded with zeros (and index 0) past the trajectory end, matching
    the batch sampler's padding convention.
    """
    T = labeled.length
    if not 0 <= start < T:
        raise ArgumentError(f"start {start} out of range [0, {T})")
    K = context_len
    n = min(K, T - start)
    num_skills = labeled.histograms.shape[1]
    d = labeled.skill_embeddings.shape[1]
    hist = np.zeros((K, num_skills), dtype=np.float32)
    emb = np.zeros((K, d), dtype=np.float32)
    idx = np.zeros(K, dtype=np.int64)
    mask = np.zeros(K, dtype=bool)
    hist[:n] = labeled.histograms[start : start + n]
    emb[:n] = labeled.skill_embeddings[start : start + n]
    idx[:n] = labeled.skill_indices[start : start + n]
    mask[:n] = True
    return hist, emb, idx, mask
