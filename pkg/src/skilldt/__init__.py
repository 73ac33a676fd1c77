"""Skill discovery from offline trajectories.

States are encoded and vector-quantized into a discrete set of skills; a
causal transformer predicts actions conditioned on the current skill
embedding and the normalized histogram of future skill indices, with skill
labels recomputed in hindsight before every training iteration.
"""

from .data import (
    ContextBatch,
    Dataset,
    Trajectory,
    dataset_stats,
    load_dataset,
    sample_batch,
    save_dataset,
)
from .envs import GeneratorStyle, LineEnv, PointMazeEnv, generate_dataset
from .evaluation import RolloutRecord, Snapshot, evaluate_all_skills, rollout_skill
from .model import PolicyConfig, SkillDTPolicy, action_loss
from .quantizer import (
    SkillCodebook,
    SkillEncoder,
    ema_update,
    kmeans_fit,
    quantize,
    straight_through,
    vq_loss,
)
from .reconstruction import (
    diversity_table,
    reconstruct,
    wasserstein_1d,
    winding_count,
)
from .relabel import LabeledTrajectory, generate_histograms, relabel_dataset, slice_labels
from .training import TrainConfig, TrainState, fit, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "ContextBatch",
    "Dataset",
    "GeneratorStyle",
    "LabeledTrajectory",
    "LineEnv",
    "PointMazeEnv",
    "PolicyConfig",
    "RolloutRecord",
    "SkillCodebook",
    "SkillDTPolicy",
    "SkillEncoder",
    "Snapshot",
    "TrainConfig",
    "TrainState",
    "Trajectory",
    "action_loss",
    "dataset_stats",
    "diversity_table",
    "ema_update",
    "evaluate_all_skills",
    "fit",
    "generate_dataset",
    "generate_histograms",
    "kmeans_fit",
    "load_checkpoint",
    "load_dataset",
    "quantize",
    "reconstruct",
    "relabel_dataset",
    "rollout_skill",
    "sample_batch",
    "save_checkpoint",
    "save_dataset",
    "slice_labels",
    "straight_through",
    "vq_loss",
    "wasserstein_1d",
    "winding_count",
]
