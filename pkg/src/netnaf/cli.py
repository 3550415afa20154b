"""Command line harness: train, eval, verify.

Every training run directory holds the resolved configuration snapshot that
produced it; feeding that snapshot back with the same seed reproduces the
learning curve (wall-clock column aside).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .agent import run_episode
from .config import ExperimentConfig, apply_overrides, load_config
from .delays import dump_delay_trace
from .errors import CheckpointFormatError, ConfigError, DimensionError
from .nn import load_checkpoint, save_checkpoint
from .verify import run_suites

LEARNING_CURVE_COLUMNS = ["episode", "reward_sum_from_50th", "mean_loss",
                          "noise_scale", "seconds_elapsed"]


def default_out_root() -> Path:
    return Path(os.environ.get("NETNAF_OUT_ROOT", "runs"))


def _fmt(value) -> str:
    """Shortest exact decimal for a double; stable across runs."""
    return repr(float(value))


def write_learning_curve(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LEARNING_CURVE_COLUMNS)
        for row in rows:
            writer.writerow([row.episode, _fmt(row.reward_sum),
                             _fmt(row.mean_loss), _fmt(row.noise_scale),
                             _fmt(row.seconds_elapsed)])


def write_trajectory(path, samples, state_dim, output_dim, input_dim):
    header = (["k", "t"]
              + [f"x{i + 1}" for i in range(state_dim)]
              + [f"y{i + 1}" for i in range(output_dim)]
              + [f"u{i + 1}" for i in range(input_dim)]
              + ["tau_sc", "tau_cp", "ctrl_arrival", "plant_arrival"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in samples:
            writer.writerow([s.k, _fmt(s.t)]
                            + [_fmt(v) for v in s.state]
                            + [_fmt(v) for v in s.output]
                            + [_fmt(v) for v in s.applied_input]
                            + [_fmt(s.sc_delay), _fmt(s.cp_delay),
                               _fmt(s.ctrl_arrival), _fmt(s.plant_arrival)])


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = apply_overrides(cfg, seed=args.seed, episodes=args.episodes)

    out_dir = Path(args.out) if args.out else (
        default_out_root() / f"train-seed{cfg.seed}")
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(out_dir / "config.txt")

    trainer = cfg.trainer()

    def on_episode(episode, row, result):
        if cfg.checkpoint_every and episode % cfg.checkpoint_every == 0:
            save_checkpoint(ckpt_dir / f"ep{episode:06d}.nnc",
                            trainer.net, trainer.adam)
        if args.progress and episode % args.progress == 0:
            print(f"episode {episode}/{cfg.episodes} "
                  f"reward_sum={row.reward_sum:.2f} "
                  f"loss={row.mean_loss:.4g} noise={row.noise_scale:.3f}",
                  flush=True)

    rows = trainer.run(on_episode=on_episode)
    write_learning_curve(out_dir / "learning_curve.csv", rows)
    save_checkpoint(out_dir / "final.nnc", trainer.net, trainer.adam)
    print(f"trained {cfg.episodes} episodes, artifacts in {out_dir}")
    return 0


def _find_config_for(checkpoint_path: Path, explicit) -> ExperimentConfig:
    if explicit:
        return load_config(explicit)
    for candidate in (checkpoint_path.parent / "config.txt",
                      checkpoint_path.parent.parent / "config.txt"):
        if candidate.is_file():
            return load_config(candidate)
    raise ConfigError("no config.txt found next to the checkpoint; pass --config")


def cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint)
    net, _ = load_checkpoint(ckpt_path)
    cfg = _find_config_for(ckpt_path, args.config)
    if net.input_dim != cfg.extended_dim:
        raise DimensionError(
            f"checkpoint expects input width {net.input_dim}, configuration "
            f"implies {cfg.extended_dim}")
    x0 = np.array([float(part) for part in args.init.split(",")])
    plant = cfg.plant()
    if x0.shape != (plant.state_dim,):
        raise DimensionError(f"initial state needs {plant.state_dim} components")

    rng = np.random.default_rng(args.delay_seed)
    result = run_episode(net, cfg.loop_setup(), cfg.train_settings(), x0=x0,
                         rng=rng, mode="eval")
    out = Path(args.out) if args.out else (
        ckpt_path.parent / f"eval-seed{args.delay_seed}.csv")
    write_trajectory(out, result.samples, plant.state_dim,
                     cfg.sensor().output_dim, plant.input_dim)
    if args.delay_trace:
        dump_delay_trace(args.delay_trace, result.delay_records)
    status = "diverged" if result.diverged else "ok"
    print(f"eval {status}: {len(result.samples)} samples, "
          f"reward sum {result.reward_sum_from(0):.3f}, wrote {out}")
    return 0


def cmd_verify(args) -> int:
    results = run_suites()
    for res in results:
        print(json.dumps(res, sort_keys=True))
    failed = [r["suite"] for r in results if not r["ok"]]
    print(f"VERIFY {'FAIL: ' + ','.join(failed) if failed else 'PASS'}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netnaf",
        description="Learn a networked controller for an unknown plant over "
                    "randomly delayed channels.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training experiment")
    p_train.add_argument("--config", help="configuration file (defaults built in)")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--episodes", type=int, default=None)
    p_train.add_argument("--out", help="run directory")
    p_train.add_argument("--progress", type=int, default=0,
                         help="print a status line every N episodes")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="noise-free rollout of a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--init", required=True,
                        help="initial plant state, comma separated")
    p_eval.add_argument("--delay-seed", type=int, default=0, dest="delay_seed")
    p_eval.add_argument("--config", help="config file (default: sibling config.txt)")
    p_eval.add_argument("--out", help="trajectory CSV path")
    p_eval.add_argument("--delay-trace", dest="delay_trace",
                        help="also dump realized delays to this CSV")
    p_eval.set_defaults(func=cmd_eval)

    p_verify = sub.add_parser("verify", help="run the fast invariant suites")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointFormatError, DimensionError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
