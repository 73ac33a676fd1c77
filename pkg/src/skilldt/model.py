"""Causal transformer over (future-skill histogram, skill embedding, state) triples.

Token layout per step t: [H_t, z_t, s_t].  Histogram and state tokens are
linear projections plus a learned timestep embedding; the skill embedding
enters raw (no projection, no timestep embedding) so none of its content
is lost.  Attention is causal over the 3K interleaved tokens, a padded
step masks all three of its tokens, and the action for step t is read at
the state-token position through a tanh-squashed linear head scaled to the
action bounds.  Action tokens are never fed in; actions appear only as
loss targets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .errors import ArgumentError, NumericsError


@dataclass
class PolicyConfig:
    state_dim: int
    action_dim: int
    num_skills: int
    max_timestep: int
    embed_dim: int = 256
    n_layers: int = 4
    n_heads: int = 4
    context_len: int = 20
    dropout: float = 0.0
    action_low: np.ndarray = field(default=None)
    action_high: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.embed_dim % self.n_heads != 0:
            raise ArgumentError(
                f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}"
            )
        if self.context_len < 1:
            raise ArgumentError(f"context_len must be >= 1, got {self.context_len}")
        if self.action_low is None:
            self.action_low = -np.ones(self.action_dim, dtype=np.float32)
        if self.action_high is None:
            self.action_high = np.ones(self.action_dim, dtype=np.float32)
        self.action_low = np.asarray(self.action_low, dtype=np.float32)
        self.action_high = np.asarray(self.action_high, dtype=np.float32)


class CausalSelfAttention(nn.Module):
    """Multi-head attention with an explicit additive mask.

    Masked logits are set to -inf before the softmax, which zeroes their
    weights exactly; outputs at allowed positions are therefore bitwise
    independent of masked-out tokens.
    """

    def __init__(self, embed_dim: int, n_heads: int, dropout: float):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = embed_dim // n_heads
        self.qkv = nn.Linear(embed_dim, 3 * embed_dim)
        self.proj = nn.Linear(embed_dim, embed_dim)
        self.attn_dropout = nn.Dropout(dropout)
        self.resid_dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
        B, L, C = x.shape
        q, k, v = self.qkv(x).split(C, dim=2)
        q = q.view(B, L, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(B, L, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(B, L, self.n_heads, self.head_dim).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        att = att.masked_fill(~allowed.unsqueeze(1), float("-inf"))
        att = torch.softmax(att, dim=-1)
        att = self.attn_dropout(att)
        y = (att @ v).transpose(1, 2).contiguous().view(B, L, C)
        return self.resid_dropout(self.proj(y))


class TransformerBlock(nn.Module):
    """Pre-norm block: attention then a width-4d GELU MLP, both residual."""

    def __init__(self, embed_dim: int, n_heads: int, dropout: float):
        super().__init__()
        self.ln1 = nn.LayerNorm(embed_dim)
        self.attn = CausalSelfAttention(embed_dim, n_heads, dropout)
        self.ln2 = nn.LayerNorm(embed_dim)
        self.mlp = nn.Sequential(
            nn.Linear(embed_dim, 4 * embed_dim),
            nn.GELU(),
            nn.Linear(4 * embed_dim, embed_dim),
            nn.Dropout(dropout),
        )

    def forward(self, x: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x), allowed)
        x = x + self.mlp(self.ln2(x))
        return x


class SkillDTPolicy(nn.Module):
    def __init__(self, config: PolicyConfig):
        super().__init__()
        self.config = config
        d = config.embed_dim
        self.embed_histogram = nn.Linear(config.num_skills, d)
        self.embed_state = nn.Linear(config.state_dim, d)
        self.embed_timestep = nn.Embedding(config.max_timestep, d)
        self.drop = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(
            TransformerBlock(d, config.n_heads, config.dropout)
            for _ in range(config.n_layers)
        )
        self.ln_f = nn.LayerNorm(d)
        self.action_head = nn.Linear(d, config.action_dim)
        center = (config.action_high + config.action_low) / 2.0
        scale = (config.action_high - config.action_low) / 2.0
        self.register_buffer("action_center", torch.from_numpy(center))
        self.register_buffer("action_scale", torch.from_numpy(scale))
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module):
        if isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)

    def forward(
        self,
        histograms: torch.Tensor,  # (B, K, N)
        skill_embeds: torch.Tensor,  # (B, K, d)
        states: torch.Tensor,  # (B, K, S)
        timesteps: torch.Tensor,  # (B, K) int64
        pad_mask: torch.Tensor,  # (B, K) bool, True = real
    ) -> torch.Tensor:
        cfg = self.config
        B, K = states.shape[:2]
        if histograms.shape != (B, K, cfg.num_skills):
            raise ArgumentError(f"histograms shape {tuple(histograms.shape)}")
        if skill_embeds.shape != (B, K, cfg.embed_dim):
            raise ArgumentError(f"skill_embeds shape {tuple(skill_embeds.shape)}")
        if states.shape[2] != cfg.state_dim:
            raise ArgumentError(f"states shape {tuple(states.shape)}")
        if timesteps.shape != (B, K) or pad_mask.shape != (B, K):
            raise ArgumentError("timesteps/pad_mask shape mismatch")
        if bool((timesteps >= cfg.max_timestep).any()) or bool((timesteps < 0).any()):
            raise ArgumentError(f"timesteps must lie in [0, {cfg.max_timestep})")

        te = self.embed_timestep(timesteps)  # (B, K, d)
        tok_hist = self.embed_histogram(histograms) + te
        tok_skill = skill_embeds  # raw, no projection, no timestep embedding
        tok_state = self.embed_state(states) + te
        tokens = torch.stack([tok_hist, tok_skill, tok_state], dim=2).reshape(
            B, 3 * K, cfg.embed_dim
        )
        tokens = self.drop(tokens)

        token_real = pad_mask.unsqueeze(2).expand(B, K, 3).reshape(B, 3 * K)
        causal = torch.tril(torch.ones(3 * K, 3 * K, dtype=torch.bool, device=tokens.device))
        allowed = causal.unsqueeze(0) & token_real.unsqueeze(1)  # (B, L, L)

        x = tokens
        for block in self.blocks:
            x = block(x, allowed)
        x = self.ln_f(x)

        state_positions = torch.arange(K, device=tokens.device) * 3 + 2
        actions = self.action_head(x[:, state_positions, :])
        actions = torch.tanh(actions) * self.action_scale.to(actions.dtype) + \
            self.action_center.to(actions.dtype)
        real = actions[pad_mask]
        if not bool(torch.isfinite(real).all()):
            raise NumericsError("non-finite activations in policy forward")
        return actions


def action_loss(
    predicted: torch.Tensor, target: torch.Tensor, pad_mask: torch.Tensor
) -> torch.Tensor:
    """Mean squared error over unmasked positions and action dimensions."""
    if predicted.shape != target.shape:
        raise ArgumentError(
            f"shape mismatch {tuple(predicted.shape)} vs {tuple(target.shape)}"
        )
    if not bool(pad_mask.any()):
        raise ArgumentError("all positions are masked; loss undefined")
    diff = predicted[pad_mask] - target[pad_mask]
    return (diff * diff).mean()
