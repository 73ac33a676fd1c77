"""Skill rollouts in a live environment and the best-skill return protocol.

A rollout commands one skill for the whole episode by filling a one-hot
buffer of length max_steps, but at each step the entry for the current
position is overwritten with the skill actually reached, and the
future-skill histograms are regenerated over the whole buffer.  Entries
beyond the current step therefore always carry the commanded skill.  The
policy window is [0, K) right-padded while t < K (action read at local
position t), then slides as [t-K+1, t] with the action read last.  Rewards
are never fed to the policy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigurationError
from .model import SkillDTPolicy
from .quantizer import SkillCodebook, quantize
from .relabel import generate_histograms


@dataclass
class Snapshot:
    """Read-only bundle of everything needed to act in an environment."""

    policy: SkillDTPolicy
    encoder: torch.nn.Module
    codebook: SkillCodebook
    state_mean: np.ndarray
    state_std: np.ndarray

    def __post_init__(self):
        cfg = self.policy.config
        if cfg.num_skills != self.codebook.num_codes:
            raise ConfigurationError(
                f"policy expects {cfg.num_skills} skills, codebook has "
                f"{self.codebook.num_codes}"
            )
        if cfg.embed_dim != self.codebook.latent_dim:
            raise ConfigurationError(
                f"policy embed dim {cfg.embed_dim} != codebook latent dim "
                f"{self.codebook.latent_dim}"
            )

    @classmethod
    def from_state(cls, state) -> "Snapshot":
        return cls(
            policy=state.policy,
            encoder=state.encoder,
            codebook=state.codebook,
            state_mean=state.state_mean,
            state_std=state.state_std,
        )


@dataclass
class RolloutRecord:
    skill_id: int
    states: np.ndarray  # (steps+1, S) raw states incl. final
    actions: np.ndarray  # (steps, A)
    observed_indices: np.ndarray  # (steps,) int64
    total_reward: float
    steps: int


def rollout_skill(
    snapshot: Snapshot,
    env,
    skill_id: int,
    max_steps: int,
    seed: int = 0,
    command_indices: np.ndarray | None = None,
    step_hook=None,
) -> RolloutRecord:
    """Roll out one commanded skill (or a commanded index sequence)."""
    policy, encoder, codebook = snapshot.policy, snapshot.encoder, snapshot.codebook
    cfg = policy.config
    N, K, d = codebook.num_codes, cfg.context_len, cfg.embed_dim

    # buffers span at least one context window so episodes shorter than K
    # degenerate to the padded-prefix branch; the commanded tail pads with
    # the final commanded skill
    horizon = max(max_steps, K)
    if command_indices is None:
        commands = np.full(horizon, skill_id, dtype=np.int64)
    else:
        commands = np.asarray(command_indices, dtype=np.int64)
        if len(commands) < horizon:
            commands = np.concatenate(
                [commands, np.full(horizon - len(commands), commands[-1])]
            )
        commands = commands[:horizon].copy()

    state = env.reset(seed)
    state_buf = np.zeros((horizon, cfg.state_dim), dtype=np.float32)
    z_buf = np.zeros((horizon, d), dtype=np.float32)
    states_raw = [np.asarray(state, dtype=np.float32).copy()]
    actions: list[np.ndarray] = []
    observed: list[int] = []
    total_reward = 0.0

    policy.eval()
    encoder.eval()
    with torch.no_grad():
        for t in range(max_steps):
            norm = ((state - snapshot.state_mean) / snapshot.state_std).astype(np.float32)
            latent = encoder(torch.from_numpy(norm[None]))
            assign = quantize(codebook, latent)
            idx = int(assign.indices[0])
            commands[t] = idx  # overwrite with the skill actually reached
            observed.append(idx)
            state_buf[t] = norm
            z_buf[t] = assign.embeddings[0].to(torch.float32).numpy()
            if step_hook is not None:
                step_hook(t, commands.copy())
            hist_full = generate_histograms(commands, N).astype(np.float32)

            if t < K:
                lo, hi, pos = 0, K, t
            else:
                lo, hi, pos = t - K + 1, t + 1, K - 1
            steps_idx = np.arange(lo, hi)
            timesteps = np.minimum(steps_idx, cfg.max_timestep - 1)
            pad_mask = steps_idx <= t

            pred = policy(
                torch.from_numpy(hist_full[lo:hi][None]),
                torch.from_numpy(z_buf[lo:hi][None]),
                torch.from_numpy(state_buf[lo:hi][None]),
                torch.from_numpy(timesteps[None]),
                torch.from_numpy(pad_mask[None]),
            )
            action = pred[0, pos].numpy().astype(np.float32)

            state, reward, done = env.step(state, action)
            total_reward += float(reward)
            states_raw.append(np.asarray(state, dtype=np.float32).copy())
            actions.append(action)
            if done:
                break

    return RolloutRecord(
        skill_id=int(skill_id),
        states=np.stack(states_raw),
        actions=np.stack(actions),
        observed_indices=np.array(observed, dtype=np.int64),
        total_reward=total_reward,
        steps=len(actions),
    )


@dataclass
class EvalReport:
    returns: np.ndarray  # (N, episodes)
    steps: np.ndarray  # (N, episodes) int64
    mean_returns: np.ndarray  # (N,)
    best_skill: int
    best_return: float
    seeds: list[int]


def evaluate_all_skills(
    snapshot: Snapshot,
    env,
    num_skills: int,
    episodes_per_skill: int = 4,
    seeds: list[int] | None = None,
    max_steps: int | None = None,
) -> EvalReport:
    """Mean return per skill over env seeds; best = max of the means."""
    if seeds is None:
        seeds = list(range(episodes_per_skill))
    if max_steps is None:
        max_steps = env.spec.max_episode_steps
    returns = np.zeros((num_skills, len(seeds)))
    steps = np.zeros((num_skills, len(seeds)), dtype=np.int64)
    for k in range(num_skills):
        for e, seed in enumerate(seeds):
            rec = rollout_skill(snapshot, env, k, max_steps, seed=seed)
            returns[k, e] = rec.total_reward
            steps[k, e] = rec.steps
    mean_returns = returns.mean(axis=1)
    best_skill = int(mean_returns.argmax())
    return EvalReport(
        returns=returns,
        steps=steps,
        mean_returns=mean_returns,
        best_skill=best_skill,
        best_return=float(mean_returns[best_skill]),
        seeds=list(seeds),
    )
