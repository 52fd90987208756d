"""Command-line interface: train / evaluate / baseline subcommands.

Exit codes: 0 on success, 1 on configuration errors, 2 on runtime failures.
"""

import argparse
import dataclasses
import sys

import numpy as np

from . import baseline as baseline_mod
from .channel import ENV_PRESETS
from .harness import ConfigError, RunConfig, evaluate, load_run_config, run_experiment
from .world import UavWorld


def _add_common_flags(parser):
    parser.add_argument("--config", metavar="PATH",
                        help="flat key/value YAML config file")
    parser.add_argument("--env", choices=sorted(ENV_PRESETS),
                        help="radio environment preset")
    parser.add_argument("--reward", choices=["r1", "r2"], help="reward variant")
    parser.add_argument("--seed", type=int, help="master seed")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uavbs",
        description="Train and evaluate an RSS-driven UAV base-station "
                    "navigation policy.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a multi-seed training sweep")
    _add_common_flags(train)
    train.add_argument("--seeds", type=int, metavar="N",
                       help="number of seeds in the sweep")
    train.add_argument("--iters", type=int, metavar="L",
                       help="training iterations per seed")
    train.add_argument("--batch", type=int, metavar="N",
                       help="transitions per iteration")
    train.add_argument("--out", metavar="DIR", help="output directory")
    train.add_argument("--verbose", action="store_true",
                       help="print one line per iteration")

    ev = sub.add_parser("evaluate", help="roll out a checkpoint and report rates")
    ev.add_argument("checkpoint", help="checkpoint file written during training")
    _add_common_flags(ev)
    ev.add_argument("--episodes", type=int, default=10)

    base = sub.add_parser("baseline", help="print the heuristic placement and rate")
    _add_common_flags(base)
    base.add_argument("--draws", type=int, default=1000,
                      help="channel draws to average the heuristic rate over")
    return parser


def _build_run_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    world_overrides = {}
    if args.env:
        world_overrides["env_preset"] = args.env
    if getattr(args, "reward", None):
        world_overrides["reward_variant"] = args.reward
    if world_overrides:
        cfg.world = dataclasses.replace(cfg.world, **world_overrides)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if getattr(args, "seeds", None) is not None:
        cfg.num_seeds = args.seeds
    if getattr(args, "iters", None) is not None:
        cfg.agent_params["iterations"] = args.iters
    if getattr(args, "batch", None) is not None:
        cfg.agent_params["batch_size"] = args.batch
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    if getattr(args, "verbose", False):
        cfg.agent_params["verbose"] = 1
    return cfg


def _cmd_train(args):
    cfg = _build_run_config(args)
    result = run_experiment(cfg)
    print(f"wrote {len(result['seed_dirs'])} seed directories under {cfg.out_dir}")
    print(f"aggregate metrics: {result['aggregate']}")


def _cmd_evaluate(args):
    cfg = _build_run_config(args)
    report = evaluate(args.checkpoint, cfg, episodes=args.episodes)
    for key, value in report.items():
        print(f"{key}: {value}")


def _cmd_baseline(args):
    cfg = _build_run_config(args)
    world = UavWorld(cfg.world)
    rng = np.random.default_rng(cfg.master_seed)
    state, _ = world.reset(rng)
    placement = baseline_mod.heuristic_placement(state.users_xy, cfg.world)
    mean_rate = baseline_mod.heuristic_mean_rate(
        placement, state.users_xy, cfg.world, rng, draws=args.draws)
    x, y, z = placement.position
    print(f"placement: x={x:.1f} m, y={y:.1f} m, height={z:.2f} m")
    print(f"required height (unclamped): {placement.required_height:.2f} m")
    print(f"coverage shortfall: {placement.coverage_shortfall}")
    print(f"mean heuristic rate: {mean_rate:.6g} bit/s "
          f"over {args.draws} channel draws")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"train": _cmd_train, "evaluate": _cmd_evaluate,
                "baseline": _cmd_baseline}
    try:
        handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
