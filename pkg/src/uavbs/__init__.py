"""RSS-driven 3-D mobility learning for a UAV-mounted base station.

A self-contained air-to-ground radio simulator plus a trust-region
policy-gradient trainer: the agent observes only per-user received signal
strength and learns a continuous 3-D velocity policy that raises the
downlink data rate of a ground user cluster.
"""

from .baseline import HeuristicPlacement, heuristic_mean_rate, heuristic_placement, rate_ratio
from .channel import (ENV_PRESETS, AntennaPattern, EnvParams, LinkGeometry,
                      LinkRealization, env_preset)
from .harness import ConfigError, RunConfig, evaluate, load_run_config, run_experiment
from .metrics import MetricsRow, read_metrics_csv, write_metrics_csv
from .nets import DiagGaussian, GaussianPolicy, ValueNet, load_checkpoint, save_checkpoint
from .trpo import Batch, TrpoAgent
from .world import Action, StepOutcome, UavWorld, WorldConfig, WorldState

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AntennaPattern",
    "Batch",
    "ConfigError",
    "DiagGaussian",
    "ENV_PRESETS",
    "EnvParams",
    "GaussianPolicy",
    "HeuristicPlacement",
    "LinkGeometry",
    "LinkRealization",
    "MetricsRow",
    "RunConfig",
    "StepOutcome",
    "TrpoAgent",
    "UavWorld",
    "ValueNet",
    "WorldConfig",
    "WorldState",
    "env_preset",
    "evaluate",
    "heuristic_mean_rate",
    "heuristic_placement",
    "load_checkpoint",
    "load_run_config",
    "rate_ratio",
    "read_metrics_csv",
    "run_experiment",
    "save_checkpoint",
    "write_metrics_csv",
]
