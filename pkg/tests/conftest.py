"""Shared fixtures: tiny synthetic datasets and cached toy training runs."""
from __future__ import annotations

import numpy as np
import pytest
import torch

from skilldt.data import Dataset, Trajectory
from skilldt.envs import GeneratorStyle, PointMazeEnv, generate_dataset
from skilldt.training import TrainConfig, TrainState, fit


def make_trajectory(T=5, S=2, A=1, seed=0, with_rewards=True, episode_id=0) -> Trajectory:
    rng = np.random.default_rng(seed)
    return Trajectory(
        states=rng.standard_normal((T, S)).astype(np.float32),
        actions=rng.standard_normal((T, A)).astype(np.float32),
        rewards=rng.standard_normal(T).astype(np.float32) if with_rewards else None,
        episode_id=episode_id,
    )


def make_dataset(num=3, T=5, S=2, A=1, seed=0, with_rewards=True) -> Dataset:
    trajs = [
        make_trajectory(T, S, A, seed=seed + i, with_rewards=with_rewards, episode_id=i)
        for i in range(num)
    ]
    return Dataset.from_trajectories(trajs, name="synthetic")


@pytest.fixture
def small_dataset() -> Dataset:
    return make_dataset()


def toy_train_config(num_skills=8, seed=0, iterations=200, **overrides) -> TrainConfig:
    """Desk-scale hyperparameters used by the end-to-end checks."""
    cfg = dict(
        num_skills=num_skills,
        iterations=iterations,
        batch_size=32,
        updates_per_iteration=10,
        learning_rate=1e-3,
        warmup_steps=100,
        embed_dim=32,
        n_layers=2,
        n_heads=2,
        context_len=8,
        seed=seed,
    )
    cfg.update(overrides)
    return TrainConfig(**cfg)


@pytest.fixture(scope="session")
def maze_dataset_4mode() -> Dataset:
    env = PointMazeEnv()
    dataset, _ = generate_dataset(env, GeneratorStyle(modes=4), 100, seed=7)
    return dataset


@pytest.fixture(scope="session")
def maze_dataset_5mode():
    env = PointMazeEnv()
    dataset, modes = generate_dataset(env, GeneratorStyle(modes=5), 100, seed=7)
    return dataset, modes


class TrainedModelCache:
    """Trains each (dataset key, num_skills, seed, iterations) combo once."""

    def __init__(self):
        self._models: dict = {}
        self.train_seconds: dict = {}

    def get(self, key, dataset: Dataset, num_skills: int, seed: int,
            iterations: int = 200) -> TrainState:
        import time

        cache_key = (key, num_skills, seed, iterations)
        if cache_key not in self._models:
            cfg = toy_train_config(num_skills=num_skills, seed=seed,
                                   iterations=iterations)
            t0 = time.time()
            self._models[cache_key] = fit(cfg, dataset)
            self.train_seconds[cache_key] = time.time() - t0
        return self._models[cache_key]


@pytest.fixture(scope="session")
def model_cache() -> TrainedModelCache:
    return TrainedModelCache()


@pytest.fixture(autouse=True)
def _single_thread():
    # keeps timing stable and results reproducible on the CI box
    torch.set_num_threads(1)
