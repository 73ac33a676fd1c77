"""Joint training of the skill encoder, codebook, and action transformer.

One training iteration relabels the whole dataset under the current
quantizer snapshot, then runs J gradient updates.  Each update samples a
context batch, encodes and quantizes the window states, feeds the
straight-through embeddings together with the (relabeled, then frozen for
the iteration) future-skill histograms into the transformer, and minimizes

    action MSE + beta * commitment

with a global gradient-norm clip and an EMA codebook update per step.  All
randomness flows from one seeded generator, so runs are reproducible and
checkpoints resume bit-exactly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from . import checkpoint as ckpt
from .data import ContextBatch, Dataset, sample_batch
from .errors import ArgumentError, ConfigurationError, TrainingDivergedError
from .model import PolicyConfig, SkillDTPolicy, action_loss
from .quantizer import (
    KMeansEncoder,
    SkillCodebook,
    SkillEncoder,
    ema_update,
    kmeans_fit,
    quantize,
    straight_through,
    vq_loss,
)
from .relabel import LabeledTrajectory, relabel_dataset, slice_labels

FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    num_skills: int = 8
    iterations: int = 200
    batch_size: int = 256
    updates_per_iteration: int = 50
    learning_rate: float = 1e-4
    grad_norm_clip: float = 0.25
    commitment_beta: float = 0.25
    weight_decay: float = 1e-4
    warmup_steps: int = 1000
    seed: int = 0
    embed_dim: int = 256
    n_layers: int = 4
    n_heads: int = 4
    context_len: int = 20
    dropout: float = 0.0
    encoder_hidden: int = 256
    ema_decay: float = 0.99
    ema_epsilon: float = 1e-5
    quantizer: str = "vq"  # "vq" | "kmeans"
    kmeans_iterations: int = 50
    action_low: list = field(default=None)
    action_high: list = field(default=None)

    def __post_init__(self):
        for name in (
            "num_skills", "batch_size", "updates_per_iteration", "learning_rate",
            "grad_norm_clip", "warmup_steps", "context_len",
        ):
            if getattr(self, name) <= 0:
                raise ArgumentError(f"{name} must be positive")
        if self.iterations < 0:
            raise ArgumentError("iterations must be >= 0")
        if self.quantizer not in ("vq", "kmeans"):
            raise ArgumentError(f"unknown quantizer {self.quantizer!r}")


@dataclass
class TrainState:
    config: TrainConfig
    policy: SkillDTPolicy
    encoder: torch.nn.Module
    codebook: SkillCodebook
    optimizer: torch.optim.AdamW
    rng: np.random.Generator
    state_mean: np.ndarray
    state_std: np.ndarray
    iteration: int = 0
    global_step: int = 0
    loss_history: list = field(default_factory=list)  # (total, action, commit)
    labeled: list[LabeledTrajectory] | None = None


@dataclass
class IterationReport:
    iteration: int
    mean_total: float
    mean_action_mse: float
    mean_commit: float


def _trainable_params(state: TrainState):
    return [p for p in list(state.policy.parameters()) + list(state.encoder.parameters())
            if p.requires_grad]


def init_state(config: TrainConfig, dataset: Dataset) -> TrainState:
    """Build networks, codebook, and optimizer; deterministic per config.seed."""
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    policy_config = PolicyConfig(
        state_dim=dataset.state_dim,
        action_dim=dataset.action_dim,
        num_skills=config.num_skills,
        max_timestep=dataset.max_episode_length(),
        embed_dim=config.embed_dim,
        n_layers=config.n_layers,
        n_heads=config.n_heads,
        context_len=config.context_len,
        dropout=config.dropout,
        action_low=config.action_low,
        action_high=config.action_high,
    )
    policy = SkillDTPolicy(policy_config)

    all_states = np.concatenate([t.states for t in dataset.trajectories], axis=0)
    if config.quantizer == "kmeans":
        encoder, codebook = kmeans_fit(
            dataset.normalize(all_states),
            config.num_skills,
            config.embed_dim,
            iterations=config.kmeans_iterations,
            seed=config.seed,
        )
    else:
        encoder = SkillEncoder(dataset.state_dim, config.embed_dim, config.encoder_hidden)
        # seed codebook rows from encoder latents of dataset states so no
        # code starts dead
        pick = rng.choice(len(all_states), size=config.num_skills, replace=False)
        with torch.no_grad():
            seed_latents = encoder(torch.from_numpy(dataset.normalize(all_states[pick])))
        codebook = SkillCodebook(
            embeddings=seed_latents.clone(),
            ema_counts=torch.ones(config.num_skills),
            ema_sums=seed_latents.clone(),
            decay=config.ema_decay,
            epsilon=config.ema_epsilon,
        )

    optimizer = torch.optim.AdamW(
        [p for p in list(policy.parameters()) + list(encoder.parameters())
         if p.requires_grad],
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
    )
    return TrainState(
        config=config,
        policy=policy,
        encoder=encoder,
        codebook=codebook,
        optimizer=optimizer,
        rng=rng,
        state_mean=dataset.state_mean.copy(),
        state_std=dataset.state_std.copy(),
    )


def compute_losses(
    policy: SkillDTPolicy,
    encoder: torch.nn.Module,
    codebook: SkillCodebook,
    histograms: torch.Tensor,  # (B, K, N)
    states: torch.Tensor,  # (B, K, S) normalized
    timesteps: torch.Tensor,  # (B, K)
    pad_mask: torch.Tensor,  # (B, K) bool
    target_actions: torch.Tensor,  # (B, K, A)
    beta: float,
):
    """Forward the full pipeline; returns losses plus the batch latents.

    The commitment term and the EMA statistics use real (unmasked)
    positions only; padded windows carry synthetic states.
    """
    B, K, S = states.shape
    latents = encoder(states.reshape(B * K, S)).reshape(B, K, -1)
    assign = quantize(codebook, latents.detach().reshape(B * K, -1))
    selected = assign.embeddings.reshape(B, K, -1)
    skill_tokens = straight_through(latents, selected)
    predicted = policy(histograms, skill_tokens, states, timesteps, pad_mask)
    a_loss = action_loss(predicted, target_actions, pad_mask)
    commit = vq_loss(latents[pad_mask], selected[pad_mask])
    total = a_loss + beta * commit
    return total, a_loss, commit, latents, assign.indices.reshape(B, K)


def _batch_histograms(
    labeled: list[LabeledTrajectory], batch: ContextBatch, context_len: int
) -> np.ndarray:
    return np.stack(
        [
            slice_labels(labeled[int(tid)], int(off), context_len)[0]
            for tid, off in zip(batch.trajectory_ids, batch.start_offsets)
        ]
    )


def train_iteration(state: TrainState, dataset: Dataset) -> IterationReport:
    """One outer iteration: relabel, then J sampled gradient updates."""
    cfg = state.config
    state.labeled = relabel_dataset(dataset, state.encoder, state.codebook)
    params = _trainable_params(state)
    totals = []
    for _ in range(cfg.updates_per_iteration):
        seed = int(state.rng.integers(0, 2**63 - 1))
        batch = sample_batch(dataset, cfg.batch_size, cfg.context_len, seed)
        hist = torch.from_numpy(_batch_histograms(state.labeled, batch, cfg.context_len))
        states = torch.from_numpy(batch.states)
        timesteps = torch.from_numpy(batch.timesteps)
        pad_mask = torch.from_numpy(batch.pad_mask)
        targets = torch.from_numpy(batch.actions)

        total, a_loss, commit, latents, indices = compute_losses(
            state.policy, state.encoder, state.codebook,
            hist, states, timesteps, pad_mask, targets, cfg.commitment_beta,
        )
        if not bool(torch.isfinite(total)):
            raise TrainingDivergedError(
                f"non-finite loss at iteration {state.iteration}, "
                f"step {state.global_step}",
                state=state,
            )

        state.optimizer.zero_grad()
        total.backward()
        torch.nn.utils.clip_grad_norm_(params, cfg.grad_norm_clip)
        warm = min(1.0, (state.global_step + 1) / cfg.warmup_steps)
        for group in state.optimizer.param_groups:
            group["lr"] = cfg.learning_rate * warm
        state.optimizer.step()
        state.global_step += 1

        if not state.codebook.frozen:
            ema_update(
                state.codebook,
                latents.detach()[pad_mask],
                indices[pad_mask],
            )
        state.loss_history.append(
            (float(total.detach()), float(a_loss.detach()), float(commit.detach()))
        )
        totals.append(state.loss_history[-1])
    state.iteration += 1
    arr = np.array(totals)
    return IterationReport(
        iteration=state.iteration,
        mean_total=float(arr[:, 0].mean()),
        mean_action_mse=float(arr[:, 1].mean()),
        mean_commit=float(arr[:, 2].mean()),
    )


def fit(
    config: TrainConfig,
    dataset: Dataset,
    checkpoint_path=None,
    checkpoint_every: int = 0,
    resume_from=None,
    eval_every: int = 0,
    eval_hook=None,
    progress=None,
) -> TrainState:
    """Run `config.iterations` training iterations (resuming if asked).

    On a non-finite loss, a diagnostic snapshot is written next to
    `checkpoint_path` before the error propagates.
    """
    if resume_from is not None:
        state = load_checkpoint(resume_from)
    else:
        state = init_state(config, dataset)
    try:
        while state.iteration < config.iterations:
            report = train_iteration(state, dataset)
            if progress is not None:
                progress(report)
            if eval_every and eval_hook is not None and state.iteration % eval_every == 0:
                eval_hook(state)
            if checkpoint_path is not None and checkpoint_every and \
                    state.iteration % checkpoint_every == 0:
                save_checkpoint(state, checkpoint_path)
    except TrainingDivergedError:
        if checkpoint_path is not None:
            save_checkpoint(state, str(checkpoint_path) + ".diagnostic")
        raise
    if checkpoint_path is not None:
        save_checkpoint(state, checkpoint_path)
    return state


def _module_arrays(module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().numpy().astype("<f4") for k, v in module.state_dict().items()}


def save_checkpoint(state: TrainState, path) -> None:
    opt_arrays: dict[str, np.ndarray] = {}
    opt_steps: dict[str, float] = {}
    params = state.optimizer.param_groups[0]["params"]
    for i, p in enumerate(params):
        st = state.optimizer.state.get(p)
        if not st:
            continue
        opt_arrays[f"{i}.exp_avg"] = st["exp_avg"].numpy().astype("<f4")
        opt_arrays[f"{i}.exp_avg_sq"] = st["exp_avg_sq"].numpy().astype("<f4")
        opt_steps[str(i)] = float(st["step"])
    sections = {
        "policy": _module_arrays(state.policy),
        "encoder": _module_arrays(state.encoder),
        "quantizer": {
            "embeddings": state.codebook.embeddings.numpy().astype("<f4"),
            "ema_counts": state.codebook.ema_counts.numpy().astype("<f4"),
            "ema_sums": state.codebook.ema_sums.numpy().astype("<f4"),
        },
        "optimizer": opt_arrays,
        "normalization": {
            "state_mean": state.state_mean.astype("<f4"),
            "state_std": state.state_std.astype("<f4"),
        },
        "losses": {
            "history": np.array(state.loss_history, dtype="<f8").reshape(-1, 3),
        },
    }
    cfg = asdict(state.config)
    pc = state.policy.config
    meta = {
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "policy_config": {
            "state_dim": pc.state_dim,
            "action_dim": pc.action_dim,
            "max_timestep": pc.max_timestep,
            "action_low": pc.action_low.tolist(),
            "action_high": pc.action_high.tolist(),
        },
        "codebook": {
            "decay": state.codebook.decay,
            "epsilon": state.codebook.epsilon,
            "frozen": state.codebook.frozen,
        },
        "iteration": state.iteration,
        "global_step": state.global_step,
        "optimizer_steps": opt_steps,
        "rng_state": _encode_rng_state(state.rng),
    }
    ckpt.write_checkpoint(path, sections, meta)


def _encode_rng_state(rng: np.random.Generator) -> dict:
    # round-trip through JSON so the stored form matches what read() returns
    return json.loads(json.dumps(rng.bit_generator.state))


def load_checkpoint(path) -> TrainState:
    sections, meta = ckpt.read_checkpoint(path)
    if meta.get("format_version") != FORMAT_VERSION:
        raise ConfigurationError(
            f"{path}: unsupported checkpoint version {meta.get('format_version')}"
        )
    config = TrainConfig(**meta["config"])
    pc_meta = meta["policy_config"]
    policy_config = PolicyConfig(
        state_dim=pc_meta["state_dim"],
        action_dim=pc_meta["action_dim"],
        num_skills=config.num_skills,
        max_timestep=pc_meta["max_timestep"],
        embed_dim=config.embed_dim,
        n_layers=config.n_layers,
        n_heads=config.n_heads,
        context_len=config.context_len,
        dropout=config.dropout,
        action_low=np.array(pc_meta["action_low"], dtype=np.float32),
        action_high=np.array(pc_meta["action_high"], dtype=np.float32),
    )
    policy = SkillDTPolicy(policy_config)
    policy.load_state_dict(
        {k: torch.from_numpy(v) for k, v in sections["policy"].items()}
    )
    if config.quantizer == "kmeans":
        encoder: torch.nn.Module = KMeansEncoder(
            pc_meta["state_dim"], config.embed_dim, seed=config.seed
        )
    else:
        encoder = SkillEncoder(pc_meta["state_dim"], config.embed_dim, config.encoder_hidden)
    encoder.load_state_dict(
        {k: torch.from_numpy(v) for k, v in sections["encoder"].items()}
    )
    cb_meta = meta["codebook"]
    codebook = SkillCodebook(
        embeddings=torch.from_numpy(sections["quantizer"]["embeddings"]),
        ema_counts=torch.from_numpy(sections["quantizer"]["ema_counts"]),
        ema_sums=torch.from_numpy(sections["quantizer"]["ema_sums"]),
        decay=cb_meta["decay"],
        epsilon=cb_meta["epsilon"],
        frozen=cb_meta["frozen"],
    )
    optimizer = torch.optim.AdamW(
        [p for p in list(policy.parameters()) + list(encoder.parameters())
         if p.requires_grad],
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
    )
    params = optimizer.param_groups[0]["params"]
    for i, p in enumerate(params):
        key = f"{i}.exp_avg"
        if key not in sections["optimizer"]:
            continue
        optimizer.state[p] = {
            "step": torch.tensor(meta["optimizer_steps"][str(i)]),
            "exp_avg": torch.from_numpy(sections["optimizer"][key]),
            "exp_avg_sq": torch.from_numpy(sections["optimizer"][f"{i}.exp_avg_sq"]),
        }
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    history = [tuple(row) for row in sections["losses"]["history"].tolist()]
    return TrainState(
        config=config,
        policy=policy,
        encoder=encoder,
        codebook=codebook,
        optimizer=optimizer,
        rng=rng,
        state_mean=sections["normalization"]["state_mean"],
        state_std=sections["normalization"]["state_std"],
        iteration=int(meta["iteration"]),
        global_step=int(meta["global_step"]),
        loss_history=history,
    )
