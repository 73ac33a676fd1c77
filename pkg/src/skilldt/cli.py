"""Command-line entry point: dataset generation, training, evaluation,
reconstruction, skill-count ablation, and dataset stats.

Every artifact-producing run writes a JSON manifest next to its outputs
(config snapshot, dataset hash, seeds, command line, timestamps) so it can
be reproduced from the manifest alone.  Exit codes: 0 success, 1
runtime/numeric failure, 2 usage or bad configuration.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import svgplot
from .data import dataset_stats, load_dataset, save_dataset
from .envs import GeneratorStyle, LineEnv, PointMazeEnv, generate_dataset
from .errors import (
    ArgumentError,
    ConfigurationError,
    FormatError,
    SkillDTError,
    ValidationError,
)
from .evaluation import Snapshot, evaluate_all_skills
from .reconstruction import reconstruct
from .training import TrainConfig, fit, load_checkpoint

USAGE_ERRORS = (ArgumentError, ConfigurationError, FormatError, ValidationError)


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path: Path, command: str, args_dict: dict, extra: dict) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv,
        "args": {k: v for k, v in args_dict.items() if not k.startswith("_")},
        "created_unix": time.time(),
        **extra,
    }
    path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _load_config_file(path) -> dict:
    try:
        values = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e
    if not isinstance(values, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return values


def _make_env(args) -> LineEnv | PointMazeEnv:
    if args.env == "line":
        return LineEnv()
    goal = None
    if getattr(args, "goal_corner", None) is not None:
        from .envs import MAZE_CORNERS

        if not 0 <= args.goal_corner < len(MAZE_CORNERS):
            raise ArgumentError(f"goal corner must be in [0, {len(MAZE_CORNERS)})")
        goal = MAZE_CORNERS[args.goal_corner]
    return PointMazeEnv(goal=goal, walls=getattr(args, "walls", False))


def cmd_gen_data(args) -> int:
    if args.modes < 1:
        raise ArgumentError("--modes must be >= 1")
    env = _make_env(args)
    style = GeneratorStyle(modes=args.modes, noise_sigma=args.noise)
    dataset, modes = generate_dataset(env, style, args.count, args.seed)
    out = Path(args.out)
    save_dataset(dataset, out)
    _write_manifest(
        out, "gen-data", vars(args),
        {"dataset_hash": _file_hash(out), "episode_modes": modes,
         "stats": dataset_stats(dataset).as_dict()},
    )
    print(f"wrote {out} ({dataset.num_trajectories} trajectories)")
    return 0


# argparse destination -> TrainConfig field, where the names differ
_FLAG_TO_FIELD = {
    "lr": "learning_rate",
    "grad_clip": "grad_norm_clip",
    "beta": "commitment_beta",
    "warmup": "warmup_steps",
    "layers": "n_layers",
    "heads": "n_heads",
}


def _train_config_from_args(args) -> TrainConfig:
    base = {}
    if args.config:
        base = _load_config_file(args.config)
    flag_values = dict(
        num_skills=args.num_skills,
        iterations=args.iterations,
        batch_size=args.batch_size,
        updates_per_iteration=args.updates_per_iteration,
        learning_rate=args.lr,
        grad_norm_clip=args.grad_clip,
        commitment_beta=args.beta,
        weight_decay=args.weight_decay,
        warmup_steps=args.warmup,
        seed=args.seed,
        embed_dim=args.embed_dim,
        n_layers=args.layers,
        n_heads=args.heads,
        context_len=args.context_len,
        dropout=args.dropout,
        quantizer=args.quantizer,
    )
    explicit = {_FLAG_TO_FIELD.get(d, d) for d in _explicit_flags(args)}
    # explicit flags beat config-file values; argparse defaults fill the rest
    merged = {**flag_values, **{k: v for k, v in base.items() if k not in explicit}}
    try:
        return TrainConfig(**merged)
    except TypeError as e:
        raise ConfigurationError(f"bad config key: {e}") from e


def _explicit_flags(args) -> set:
    return getattr(args, "_explicit", set())


class _TrackedStore(argparse.Action):
    """Store action that also records the flag as explicitly given.

    Subparsers run against a fresh child namespace, so the tracking set is
    created lazily on whichever namespace the action sees; argparse copies
    it back to the parent afterwards.
    """

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        explicit = getattr(namespace, "_explicit", None)
        if explicit is None:
            explicit = set()
            setattr(namespace, "_explicit", explicit)
        explicit.add(self.dest)


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    config = _train_config_from_args(args)
    out = Path(args.out)
    t0 = time.time()
    state = fit(
        config, dataset,
        checkpoint_path=out,
        checkpoint_every=args.checkpoint_every,
        resume_from=args.resume,
        progress=(lambda r: print(
            f"iter {r.iteration}: action_mse={r.mean_action_mse:.5f} "
            f"commit={r.mean_commit:.5f}"
        )) if args.verbose else None,
    )
    _write_manifest(
        out, "train", vars(args),
        {
            "dataset_hash": _file_hash(args.data),
            "config": asdict(config),
            "iterations_done": state.iteration,
            "train_seconds": time.time() - t0,
            "final_action_mse": state.loss_history[-1][1] if state.loss_history else None,
        },
    )
    print(f"wrote {out} after {state.iteration} iterations")
    return 0


def cmd_eval(args) -> int:
    state = load_checkpoint(args.checkpoint)
    snapshot = Snapshot.from_state(state)
    env = _make_env(args)
    seeds = _parse_int_list(args.seeds)
    report = evaluate_all_skills(
        snapshot, env, state.config.num_skills,
        episodes_per_skill=len(seeds), seeds=seeds, max_steps=args.max_steps,
    )
    out = Path(args.out)
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["skill_id", "seed", "return", "steps"])
        for k in range(state.config.num_skills):
            for e, seed in enumerate(report.seeds):
                writer.writerow([k, seed, f"{report.returns[k, e]:.6f}",
                                 int(report.steps[k, e])])
        writer.writerow(["best", report.best_skill,
                         f"{report.best_return:.6f}", ""])
    _write_manifest(
        out, "eval", vars(args),
        {"best_skill": report.best_skill, "best_return": report.best_return,
         "mean_returns": report.mean_returns.tolist()},
    )
    print(f"best skill {report.best_skill}: mean return {report.best_return:.4f}")
    return 0


def cmd_reconstruct(args) -> int:
    state = load_checkpoint(args.checkpoint)
    snapshot = Snapshot.from_state(state)
    env = _make_env(args)
    dataset = load_dataset(args.target)
    if not 0 <= args.target_index < dataset.num_trajectories:
        raise ArgumentError(
            f"--target-index {args.target_index} out of range "
            f"[0, {dataset.num_trajectories})"
        )
    target = dataset.trajectories[args.target_index]
    report = reconstruct(snapshot, env, target, max_steps=args.max_steps,
                         seed=args.seed)
    prefix = Path(args.out_prefix)
    traj_csv = prefix.with_suffix(".trajectory.csv")
    with open(traj_csv, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "kind"] + [f"x{i}" for i in range(target.states.shape[1])])
        for t, s in enumerate(target.states):
            writer.writerow([t, "target"] + [f"{v:.6f}" for v in s])
        for t, s in enumerate(report.record.states):
            writer.writerow([t, "reconstructed"] + [f"{v:.6f}" for v in s])
    hist_csv = prefix.with_suffix(".histograms.csv")
    with open(hist_csv, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["skill"] + list(range(len(report.target_histogram))))
        writer.writerow(["target"] + [f"{v:.6f}" for v in report.target_histogram])
        writer.writerow(["reconstructed"] + [f"{v:.6f}" for v in report.rollout_histogram])
    svg = prefix.with_suffix(".svg")
    if target.states.shape[1] >= 2:
        svgplot.plot_trajectory_overlay(
            svg,
            [(target.states, "target"), (report.record.states, "reconstructed")],
            env=env,
            title=f"endpoint err {report.endpoint_error:.3f}, "
                  f"hist dist {report.histogram_distance:.3f}",
        )
    else:
        svgplot.plot_histograms(
            svg, [report.target_histogram, report.rollout_histogram],
            ["target", "reconstructed"],
        )
    _write_manifest(
        prefix.with_suffix(".svg"), "reconstruct", vars(args),
        {"endpoint_error": report.endpoint_error,
         "histogram_distance": report.histogram_distance},
    )
    print(
        f"endpoint error {report.endpoint_error:.4f}, "
        f"histogram distance {report.histogram_distance:.4f}"
    )
    return 0


def cmd_ablate(args) -> int:
    skill_counts = _parse_int_list(args.skills)
    if not skill_counts:
        raise ArgumentError("--skills list is empty")
    seeds = _parse_int_list(args.seeds)
    dataset = load_dataset(args.data)
    env = _make_env(args)
    rows = []
    for n in skill_counts:
        for seed in seeds:
            cfg = _train_config_from_args(args)
            cfg.num_skills = n
            cfg.seed = seed
            state = fit(cfg, dataset)
            snapshot = Snapshot.from_state(state)
            report = evaluate_all_skills(snapshot, env, n)
            rows.append((n, seed, report.best_return, report.best_skill))
            print(f"N={n} seed={seed}: best return {report.best_return:.4f}")
    out = Path(args.out)
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["num_skills", "seed", "best_return", "best_skill"])
        for row in rows:
            writer.writerow([row[0], row[1], f"{row[2]:.6f}", row[3]])
    _write_manifest(out, "ablate", vars(args), {"dataset_hash": _file_hash(args.data)})
    return 0


def cmd_stats(args) -> int:
    stats = dataset_stats(load_dataset(args.data))
    print(json.dumps(stats.as_dict(), indent=2))
    return 0


def _parse_int_list(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as e:
        raise ArgumentError(f"expected comma-separated integers, got {text!r}") from e


def _add_env_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", choices=["pointmaze", "line"], default="pointmaze")
    p.add_argument("--walls", action="store_true", help="U-corridor wall (pointmaze)")
    p.add_argument("--goal-corner", type=int, default=None,
                   help="pointmaze goal corner index (default 0)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON config file (flags win)")
    p.add_argument("--num-skills", type=int, default=8, action=_TrackedStore)
    p.add_argument("--iterations", type=int, default=200, action=_TrackedStore)
    p.add_argument("--batch-size", type=int, default=256, action=_TrackedStore)
    p.add_argument("--updates-per-iteration", type=int, default=50, action=_TrackedStore)
    p.add_argument("--lr", type=float, default=1e-4, action=_TrackedStore)
    p.add_argument("--grad-clip", type=float, default=0.25, action=_TrackedStore)
    p.add_argument("--beta", type=float, default=0.25, action=_TrackedStore)
    p.add_argument("--weight-decay", type=float, default=1e-4, action=_TrackedStore)
    p.add_argument("--warmup", type=int, default=1000, action=_TrackedStore)
    p.add_argument("--seed", type=int, default=0, action=_TrackedStore)
    p.add_argument("--embed-dim", type=int, default=256, action=_TrackedStore)
    p.add_argument("--layers", type=int, default=4, action=_TrackedStore)
    p.add_argument("--heads", type=int, default=4, action=_TrackedStore)
    p.add_argument("--context-len", type=int, default=20, action=_TrackedStore)
    p.add_argument("--dropout", type=float, default=0.0, action=_TrackedStore)
    p.add_argument("--quantizer", choices=["vq", "kmeans"], default="vq",
                   action=_TrackedStore)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skill-dt",
        description="Discrete skill discovery from offline trajectories",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a scripted multimodal dataset")
    _add_env_flags(p)
    p.add_argument("--modes", type=int, default=4)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train skills on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-skill returns for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    _add_env_flags(p)
    p.add_argument("--seeds", default="0,1,2,3")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reconstruct", help="zero-shot trajectory reconstruction")
    p.add_argument("--checkpoint", required=True)
    _add_env_flags(p)
    p.add_argument("--target", required=True, help="dataset file holding the target")
    p.add_argument("--target-index", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("ablate", help="skill-count sweep: train + evaluate per N")
    p.add_argument("--data", required=True)
    _add_env_flags(p)
    p.add_argument("--skills", default="2,4,8", help="comma-separated N values")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("stats", help="dataset summary")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SkillDTError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
