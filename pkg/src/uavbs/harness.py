"""Experiment orchestration: run configs, multi-seed sweeps, CSV emission,
checkpoint evaluation.

A run sweeps ``num_seeds`` seeds derived from the master seed by fixed unit
offsets (seed_i = master_seed + i), writes one metrics CSV per seed plus a
mean/std aggregate, and drops network checkpoints next to each seed's CSV.
"""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import baseline as baseline_mod
from .metrics import write_aggregate_csv, write_metrics_csv
from .nets import load_checkpoint
from .trpo import TrpoAgent
from .validation import check_rng
from .world import Action, UavWorld, WorldConfig


class ConfigError(Exception):
    """Bad run configuration (unknown keys, invalid values, dim mismatches)."""


_WORLD_KEYS = {f.name for f in dataclasses.fields(WorldConfig)}
_AGENT_KEYS = set(TrpoAgent().get_params())
_RUN_KEYS = {"seed", "num_seeds", "out_dir"}


@dataclass
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    agent_params: dict = field(default_factory=dict)
    master_seed: int = 0
    num_seeds: int = 6
    out_dir: str = "runs"

    def seeds(self):
        return [self.master_seed + i for i in range(self.num_seeds)]

    def make_agent(self, seed) -> TrpoAgent:
        return TrpoAgent(seed=seed, **self.agent_params)


def run_config_from_dict(flat: dict) -> RunConfig:
    """Build a RunConfig from a flat key/value mapping.

    Keys are routed by name to the world config, the agent hyperparameters,
    or the run itself; unknown keys are rejected.
    """
    world_kwargs, agent_kwargs, run_kwargs = {}, {}, {}
    for key, value in flat.items():
        # "seed" is the run's master seed; per-seed agent seeds are derived.
        if key in _RUN_KEYS:
            run_kwargs[key] = value
        elif key in _WORLD_KEYS:
            world_kwargs[key] = tuple(value) if key == "cluster_center" else value
        elif key in _AGENT_KEYS:
            agent_kwargs[key] = tuple(value) if key == "hidden" else value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        world = WorldConfig(**world_kwargs)
        TrpoAgent(**agent_kwargs)._check_params()
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(world=world, agent_params=agent_kwargs,
                     master_seed=int(run_kwargs.get("seed", 0)),
                     num_seeds=int(run_kwargs.get("num_seeds", 6)),
                     out_dir=str(run_kwargs.get("out_dir", "runs")))


def load_run_config(path) -> RunConfig:
    """Read a flat key/value YAML config file."""
    try:
        with open(path) as fh:
            flat = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    if not isinstance(flat, dict):
        raise ConfigError(f"{path}: config must be a flat key/value mapping")
    return run_config_from_dict(flat)


def run_experiment(cfg: RunConfig):
    """Train every seed, write per-seed metrics CSVs and the aggregate CSV.

    Returns {"seed_dirs": [...], "histories": [...], "aggregate": path}.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = UavWorld(cfg.world)
    seed_dirs, histories, agents = [], [], []
    for seed in cfg.seeds():
        seed_dir = out / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        agent = cfg.make_agent(seed)
        agent.fit(world, out_dir=str(seed_dir))
        write_metrics_csv(seed_dir / "metrics.csv", agent.history_)
        seed_dirs.append(seed_dir)
        histories.append(agent.history_)
        agents.append(agent)
    aggregate = out / "aggregate.csv"
    write_aggregate_csv(aggregate, histories)
    return {"seed_dirs": seed_dirs, "histories": histories,
            "agents": agents, "aggregate": aggregate}


def evaluate(checkpoint_path, cfg: RunConfig, episodes: int, seed=None,
             baseline_draws: int = 1000):
    """Roll out a trained checkpoint with stochastic actions (matching
    training-time behavior) and report rates, delta_r and violation rates.
    """
    try:
        policy, _, header = load_checkpoint(checkpoint_path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load checkpoint: {exc}") from exc
    world = UavWorld(cfg.world)
    if (policy.state_dim != world.observation_dim
            or policy.action_dim != world.action_dim):
        raise ConfigError(
            f"checkpoint dims (S={policy.state_dim}, B={policy.action_dim}) do "
            f"not match the world (S={world.observation_dim}, B={world.action_dim})")

    rng = check_rng(cfg.master_seed if seed is None else seed)
    rewards, sum_rates, heights, dists = [], [], [], []
    speed_viols, boundary_viols = [], []
    heuristic_rates = []
    for _ in range(episodes):
        state, obs = world.reset(rng)
        placement = baseline_mod.heuristic_placement(state.users_xy, cfg.world)
        heuristic_rates.append(baseline_mod.heuristic_mean_rate(
            placement, state.users_xy, cfg.world, rng, draws=baseline_draws))
        done = False
        while not done:
            action = policy.distribution(obs).sample(rng)
            state, outcome = world.step(state, Action.from_array(action), rng)
            obs = outcome.observation
            done = outcome.done
            rewards.append(outcome.reward)
            sum_rates.append(outcome.diagnostics["sum_rate"])
            heights.append(outcome.diagnostics["height"])
            dists.append(outcome.diagnostics["dist_to_cluster"])
            speed_viols.append(outcome.diagnostics["speed_violation"])
            boundary_viols.append(outcome.diagnostics["boundary_violation"])

    agent_rate = float(np.mean(sum_rates))
    heuristic_rate = float(np.mean(heuristic_rates))
    return {
        "checkpoint_iteration": header["iteration"],
        "episodes": episodes,
        "steps": len(rewards),
        "mean_reward": float(np.mean(rewards)),
        "agent_mean_rate": agent_rate,
        "heuristic_mean_rate": heuristic_rate,
        "delta_r": baseline_mod.rate_ratio(agent_rate, heuristic_rate),
        "speed_violation_rate": float(np.mean(speed_viols)),
        "boundary_violation_rate": float(np.mean(boundary_viols)),
        "mean_height": float(np.mean(heights)),
        "mean_dist_to_cluster": float(np.mean(dists)),
    }
