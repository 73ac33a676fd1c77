"""State-to-skill encoding and vector quantization.

States are encoded by an MLP into continuous latents, then snapped to the
nearest row of a codebook.  The codebook itself is not gradient-trained:
cluster sizes and latent sums are tracked with exponential moving averages
and each embedding is the smoothed running mean of its cluster.  The
encoder receives gradients through a straight-through pass and a
commitment (mean-squared) penalty toward the selected rows.

A K-Means variant fits a frozen codebook over (projected) states once and
never updates it; it serves as the baseline quantizer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import ArgumentError, NumericsError

_TINY = 1e-12


class SkillEncoder(nn.Module):
    """MLP mapping states (S) to continuous skill latents (d)."""

    def __init__(self, state_dim: int, latent_dim: int, hidden_dim: int = 256):
        super().__init__()
        self.state_dim = state_dim
        self.latent_dim = latent_dim
        self.net = nn.Sequential(
            nn.Linear(state_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, latent_dim),
        )

    def forward(self, states: torch.Tensor) -> torch.Tensor:
        finite = torch.isfinite(states)
        if not bool(finite.all()):
            rows = (~finite).reshape(len(states), -1).any(dim=-1)
            bad = int(rows.nonzero()[0, 0])
            raise NumericsError(f"non-finite state at row {bad}")
        return self.net(states)


def encode(encoder: SkillEncoder, states: torch.Tensor) -> torch.Tensor:
    """Deterministic forward pass of the encoder over a batch of states."""
    return encoder(states)


@dataclass
class SkillCodebook:
    """N learnable skill embeddings plus their EMA accumulators.

    Invariant after every update: embeddings[i] == ema_sums[i] / smoothed
    counts[i].  `frozen` marks K-Means codebooks that must never receive
    EMA updates.
    """

    embeddings: torch.Tensor  # (N, d)
    ema_counts: torch.Tensor  # (N,)
    ema_sums: torch.Tensor  # (N, d)
    decay: float = 0.99
    epsilon: float = 1e-5
    frozen: bool = False

    def __post_init__(self):
        if self.num_codes < 2:
            raise ArgumentError(f"codebook needs at least 2 codes, got {self.num_codes}")

    @property
    def num_codes(self) -> int:
        return self.embeddings.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.embeddings.shape[1]

    @classmethod
    def from_latents(
        cls, latents: torch.Tensor, num_codes: int, seed: int,
        decay: float = 0.99, epsilon: float = 1e-5,
    ) -> "SkillCodebook":
        """Initialize rows from `num_codes` latents sampled without replacement."""
        if len(latents) < num_codes:
            raise ArgumentError(
                f"need at least {num_codes} latents to seed the codebook, got {len(latents)}"
            )
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(latents), size=num_codes, replace=False)
        emb = latents[torch.from_numpy(pick)].detach().clone()
        return cls(
            embeddings=emb,
            ema_counts=torch.ones(num_codes, dtype=emb.dtype),
            ema_sums=emb.clone(),
            decay=decay,
            epsilon=epsilon,
        )


@dataclass
class SkillAssignments:
    """Nearest-codebook-row assignment for a batch of latents."""

    indices: torch.Tensor  # (M,) int64
    embeddings: torch.Tensor  # (M, d) selected codebook rows
    latents: torch.Tensor  # (M, d) pre-quantization latents


def quantize(codebook: SkillCodebook, latents: torch.Tensor) -> SkillAssignments:
    """Assign each latent to its nearest embedding (squared L2, ties to lowest index)."""
    diff = latents.unsqueeze(1) - codebook.embeddings.unsqueeze(0)  # (M, N, d)
    dist = (diff * diff).sum(dim=-1)
    indices = dist.argmin(dim=1)
    return SkillAssignments(
        indices=indices,
        embeddings=codebook.embeddings[indices],
        latents=latents,
    )


def vq_loss(latents: torch.Tensor, selected: torch.Tensor) -> torch.Tensor:
    """Commitment penalty: MSE between latents and their selected rows.

    The selected rows are treated as constants (the codebook learns via EMA
    only), so gradient flows to the encoder side alone.
    """
    if latents.shape != selected.shape:
        raise ArgumentError(f"shape mismatch {tuple(latents.shape)} vs {tuple(selected.shape)}")
    return ((latents - selected.detach()) ** 2).mean()


def straight_through(latents: torch.Tensor, selected: torch.Tensor) -> torch.Tensor:
    """Forward the selected embedding, pass gradients through to the latent.

    Written as selected + (latents - latents.detach()) so the forward value
    is bitwise the selected row (the parenthesized term is exactly zero).
    """
    if latents.shape != selected.shape:
        raise ArgumentError(f"shape mismatch {tuple(latents.shape)} vs {tuple(selected.shape)}")
    return selected.detach() + (latents - latents.detach())


def ema_update(
    codebook: SkillCodebook, latents: torch.Tensor, indices: torch.Tensor
) -> SkillCodebook:
    """Fold one batch of assigned latents into the EMA accumulators.

    counts <- decay*counts + (1-decay)*batch_counts, Laplace-smoothed so no
    cluster size reaches zero; sums decay likewise; embeddings become
    sums/counts.  Mutates and returns the codebook.
    """
    if codebook.frozen:
        raise ArgumentError("cannot EMA-update a frozen (K-Means) codebook")
    n, d = codebook.num_codes, codebook.latent_dim
    latents = latents.detach()
    batch_counts = torch.zeros(n, dtype=codebook.ema_counts.dtype)
    batch_counts.index_add_(0, indices, torch.ones(len(indices), dtype=batch_counts.dtype))
    batch_sums = torch.zeros(n, d, dtype=codebook.ema_sums.dtype)
    batch_sums.index_add_(0, indices, latents.to(batch_sums.dtype))

    g = codebook.decay
    counts = g * codebook.ema_counts + (1.0 - g) * batch_counts
    sums = g * codebook.ema_sums + (1.0 - g) * batch_sums
    total = counts.sum()
    smoothed = (counts + codebook.epsilon) / (total + n * codebook.epsilon) * total
    codebook.ema_counts = smoothed
    codebook.ema_sums = sums
    codebook.embeddings = sums / smoothed.clamp_min(_TINY).unsqueeze(1)
    return codebook


class KMeansEncoder(nn.Module):
    """Fixed linear map standing in for the learned encoder in the baseline.

    Identity when S == d, otherwise a seeded Gaussian projection; carries no
    trainable parameters.
    """

    def __init__(self, state_dim: int, latent_dim: int, seed: int = 0):
        super().__init__()
        self.state_dim = state_dim
        self.latent_dim = latent_dim
        if state_dim == latent_dim:
            proj = np.eye(state_dim, dtype=np.float32)
        else:
            rng = np.random.default_rng(seed)
            proj = rng.standard_normal((state_dim, latent_dim)).astype(np.float32)
            proj /= np.sqrt(state_dim)
        self.register_buffer("projection", torch.from_numpy(proj))

    def forward(self, states: torch.Tensor) -> torch.Tensor:
        finite = torch.isfinite(states)
        if not bool(finite.all()):
            rows = (~finite).reshape(len(states), -1).any(dim=-1)
            bad = int(rows.nonzero()[0, 0])
            raise NumericsError(f"non-finite state at row {bad}")
        return states @ self.projection.to(states.dtype)


def kmeans_fit(
    states: np.ndarray,
    num_codes: int,
    latent_dim: int,
    iterations: int = 50,
    seed: int = 0,
) -> tuple[KMeansEncoder, SkillCodebook]:
    """Fit a frozen codebook with Lloyd's algorithm over projected states.

    Initialization is k-means++ style (seeded), which never picks duplicate
    points, so N centers require N distinct states.
    """
    states = np.asarray(states, dtype=np.float64)
    distinct = np.unique(states, axis=0)
    if len(distinct) < num_codes:
        raise ArgumentError(
            f"k-means needs at least {num_codes} distinct states, got {len(distinct)}"
        )
    encoder = KMeansEncoder(states.shape[1], latent_dim, seed=seed)
    with torch.no_grad():
        pts = encoder(torch.from_numpy(states.astype(np.float32))).double().numpy()

    rng = np.random.default_rng(seed)
    centers = np.empty((num_codes, latent_dim), dtype=np.float64)
    centers[0] = pts[rng.integers(len(pts))]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for k in range(1, num_codes):
        probs = d2 / d2.sum()
        centers[k] = pts[rng.choice(len(pts), p=probs)]
        d2 = np.minimum(d2, ((pts - centers[k]) ** 2).sum(axis=1))

    assign = np.full(len(pts), -1, dtype=np.int64)
    for _ in range(iterations):
        dist = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
        new_assign = dist.argmin(axis=1)
        for k in range(num_codes):
            members = pts[new_assign == k]
            if len(members):
                centers[k] = members.mean(axis=0)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign

    emb = torch.from_numpy(centers.astype(np.float32))
    sizes = torch.from_numpy(
        np.maximum(np.bincount(assign, minlength=num_codes), 1).astype(np.float32)
    )
    return encoder, SkillCodebook(
        embeddings=emb,
        ema_counts=sizes,
        ema_sums=emb * sizes.unsqueeze(1),
        frozen=True,
    )
