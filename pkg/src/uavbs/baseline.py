"""Location-aware placement heuristic used as the rate benchmark.

The heuristic hovers over the cluster center at the lowest height that keeps
every user inside the antenna main lobe; the achieved rate normalizes the
agent's rate into the ratio ``delta_r``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import channel
from .validation import check_finite_array, check_rng

#: Relative margin on the computed height so the farthest user clears the
#: strict main-lobe inequality instead of sitting exactly on the cone.
_HEIGHT_GUARD = 1e-9


@dataclass(frozen=True)
class HeuristicPlacement:
    position: np.ndarray        # (3,): cluster center x, y and clamped height
    required_height: float      # m, height before clamping to [h_min, h_max]
    coverage_shortfall: bool    # True when h_max < required_height


def heuristic_placement(users_xy, config) -> HeuristicPlacement:
    """Hover over the cluster center, high enough to cover all users.

    The needed height grows with the farthest user's distance from the
    center; if it exceeds h_max the placement is clamped and flagged, leaving
    edge users in the side lobe.
    """
    users_xy = check_finite_array(users_xy, "users_xy")
    if users_xy.size == 0:
        raise ValueError("heuristic placement needs at least one user")
    center = np.asarray(config.cluster_center, dtype=float)
    rel = users_xy - center
    r_max = float(np.max(np.hypot(rel[:, 0], rel[:, 1])))
    required = r_max * math.tan(math.pi / 2.0 - config.beamwidth / 2.0) * (1.0 + _HEIGHT_GUARD)
    height = float(np.clip(required, config.h_min, config.h_max))
    return HeuristicPlacement(
        position=np.array([center[0], center[1], height]),
        required_height=required,
        coverage_shortfall=required > config.h_max,
    )


def heuristic_mean_rate(placement: HeuristicPlacement, users_xy, config, rng,
                        draws: int = 1000) -> float:
    """Mean summed downlink rate (bits/s) at the fixed placement, averaged over
    independent channel draws."""
    rng = check_rng(rng)
    env = channel.env_preset(config.env_preset)
    antenna = channel.AntennaPattern.from_beamwidth(config.beamwidth)
    geom = channel.LinkGeometry.from_positions(placement.position, users_xy)
    num_users = len(np.atleast_2d(users_xy))
    tiled = channel.LinkGeometry(
        horizontal_dist=np.broadcast_to(geom.horizontal_dist, (draws, num_users)),
        height=geom.height,
        dist_3d=np.broadcast_to(geom.dist_3d, (draws, num_users)),
        elevation_deg=np.broadcast_to(geom.elevation_deg, (draws, num_users)),
    )
    link = channel.sample_link(env, tiled, antenna, config.carrier_hz, rng)
    rates = channel.per_user_rate(link, config.tx_power, num_users,
                                  config.noise_power, config.bandwidth_hz)
    return float(rates.sum(axis=1).mean())


def rate_ratio(agent_rates_mean: float, heuristic_rates_mean: float) -> float:
    """delta_r: the agent's mean rate over the heuristic's mean rate."""
    if heuristic_rates_mean <= 0.0:
        raise ValueError("heuristic mean rate must be positive")
    return agent_rates_mean / heuristic_rates_mean
