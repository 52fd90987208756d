"""Episodic simulation of a UAV base station serving a cluster of ground users.

Each slot the UAV applies a 3-D velocity command (speed, azimuth, polar),
users take a small reflected random-walk step inside their cluster, uplink
pilots are sampled into a received-signal-strength observation, downlink
rates are drawn sharing the uplink's large-scale channel state, and a reward
combining rate, RSS and constraint penalties is emitted.

The world object itself is immutable configuration; episode state is passed
explicitly, so (state, action, rng) fully determines the successor.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel
from .validation import check_finite_array, check_rng

#: Observations feed the nets as dB SNR divided by this, to keep inputs O(1).
OBS_DB_SCALE = 100.0


@dataclass(frozen=True)
class WorldConfig:
    search_radius: float = 2000.0          # m, half-side of the allowed square
    cluster_center: tuple = (1500.0, 1500.0)  # m
    cluster_radius: float = 100.0          # m
    num_users: int = 10
    h_min: float = 40.0                    # m
    h_max: float = 150.0                   # m
    v_min: float = 0.0                     # m/s
    v_max: float = 100.0                   # m/s
    slot_seconds: float = 1.0
    horizon: int = 500                     # steps per episode
    env_preset: str = "highrise"
    reward_variant: str = "r1"
    beamwidth: float = math.pi / 3.0       # rad
    tx_power: float = 1.0                  # W, downlink budget per slot
    user_step_sigma: float = 1.0           # m per slot, 0 freezes users
    pilot_power: float = 0.1               # W, uplink pilot
    noise_power: float = 1e-20             # W, total background noise
    bandwidth_hz: float = 1e6
    carrier_hz: float = 2e9

    def __post_init__(self):
        if self.h_min >= self.h_max:
            raise ValueError("h_min must be < h_max")
        if self.v_min >= self.v_max:
            raise ValueError("v_min must be < v_max")
        if self.num_users < 1:
            raise ValueError("num_users must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.reward_variant not in ("r1", "r2"):
            raise ValueError("reward_variant must be 'r1' or 'r2'")
        cx, cy = self.cluster_center
        if (abs(cx) + self.cluster_radius > self.search_radius
                or abs(cy) + self.cluster_radius > self.search_radius):
            raise ValueError("cluster must fit inside the search area")
        channel.env_preset(self.env_preset)  # fail fast on bad names


@dataclass(frozen=True)
class Action:
    """Velocity command: magnitude plus spherical direction (polar from +z)."""

    speed: float     # m/s, feasible in [v_min, v_max]
    azimuth: float   # rad, feasible in [0, 2*pi]
    polar: float     # rad, feasible in [0, pi]

    @classmethod
    def from_array(cls, arr) -> "Action":
        arr = check_finite_array(arr, "action")
        if arr.shape != (3,):
            raise ValueError(f"action needs 3 components, got shape {arr.shape}")
        return cls(speed=float(arr[0]), azimuth=float(arr[1]), polar=float(arr[2]))


@dataclass(frozen=True)
class WorldState:
    uav_xyz: np.ndarray    # (3,)
    users_xy: np.ndarray   # (K, 2)
    step_index: int


@dataclass(frozen=True)
class StepOutcome:
    observation: np.ndarray  # (K,) scaled log-SNR values
    reward: float
    done: bool
    diagnostics: dict = field(default_factory=dict)


def _range_excess(value, lo, hi, span):
    return (max(0.0, value - hi) + max(0.0, lo - value)) / span


def action_penalty(action: Action, proposed_xyz, config: WorldConfig) -> float:
    """Summed normalized excess over every violated action/box constraint.

    Each violated constraint contributes excess divided by the constraint's
    span; a feasible action whose motion stays in bounds contributes 0.
    """
    r = config.search_radius
    x, y, z = np.asarray(proposed_xyz, dtype=float)
    return (
        _range_excess(action.speed, config.v_min, config.v_max, config.v_max - config.v_min)
        + _range_excess(action.azimuth, 0.0, 2.0 * math.pi, 2.0 * math.pi)
        + _range_excess(action.polar, 0.0, math.pi, math.pi)
        + _range_excess(x, -r, r, 2.0 * r)
        + _range_excess(y, -r, r, 2.0 * r)
        + _range_excess(z, config.h_min, config.h_max, config.h_max - config.h_min)
    )


def reward_r1(rates, rss_snr_db, delta_a) -> float:
    """Piecewise reward: the rate+RSS sum is scaled by 0.1 and charged 5*delta_a
    whenever any penalty accrued, otherwise returned unscaled.

    ``rates`` are per-user spectral efficiencies (bits/s/Hz); ``rss_snr_db``
    are the per-user uplink SNRs in dB.
    """
    if delta_a < 0:
        raise ValueError("delta_a must be >= 0")
    base = float(np.sum(rates) + 0.01 * np.sum(rss_snr_db))
    if delta_a > 0:
        return 0.1 * base - 5.0 * delta_a
    return base


def reward_r2(rates, rss_snr_db, delta_a) -> float:
    """Single-branch variant: rate+RSS sum minus 5*delta_a, no rescaling."""
    if delta_a < 0:
        raise ValueError("delta_a must be >= 0")
    return float(np.sum(rates) + 0.01 * np.sum(rss_snr_db)) - 5.0 * delta_a


class UavWorld:
    """Immutable world configuration with pure reset/step transition functions."""

    def __init__(self, config: WorldConfig):
        self.config = config
        self.env = channel.env_preset(config.env_preset)
        self.antenna = channel.AntennaPattern.from_beamwidth(config.beamwidth)
        self._reward_fn = reward_r1 if config.reward_variant == "r1" else reward_r2

    @property
    def observation_dim(self) -> int:
        return self.config.num_users

    @property
    def action_dim(self) -> int:
        return 3

    def reset(self, rng):
        """Draw users uniformly on the cluster disk and the UAV uniformly in the
        search box, then produce the first RSS observation."""
        rng = check_rng(rng)
        cfg = self.config
        radii = cfg.cluster_radius * np.sqrt(rng.random(cfg.num_users))
        angles = 2.0 * math.pi * rng.random(cfg.num_users)
        users = np.asarray(cfg.cluster_center) + np.stack(
            [radii * np.cos(angles), radii * np.sin(angles)], axis=1)
        xy = rng.uniform(-cfg.search_radius, cfg.search_radius, size=2)
        h = rng.uniform(cfg.h_min, cfg.h_max)
        uav = np.array([xy[0], xy[1], h])
        state = WorldState(uav_xyz=uav, users_xy=users, step_index=0)
        snr_db, _, _ = self._sample_uplink(state, rng)
        return state, snr_db / OBS_DB_SCALE

    def step(self, state: WorldState, action: Action, rng):
        """Advance one slot. Infeasible action components are clamped, penalized
        and executed with the clamped values; the box clip never terminates."""
        rng = check_rng(rng)
        cfg = self.config
        if state.step_index >= cfg.horizon:
            raise RuntimeError("episode already finished; call reset()")

        speed = min(max(action.speed, cfg.v_min), cfg.v_max)
        azimuth = min(max(action.azimuth, 0.0), 2.0 * math.pi)
        polar = min(max(action.polar, 0.0), math.pi)
        direction = np.array([
            math.sin(polar) * math.cos(azimuth),
            math.sin(polar) * math.sin(azimuth),
            math.cos(polar),
        ])
        proposed = state.uav_xyz + speed * cfg.slot_seconds * direction

        delta_a = action_penalty(action, proposed, cfg)
        r = cfg.search_radius
        new_uav = np.clip(proposed, [-r, -r, cfg.h_min], [r, r, cfg.h_max])
        boundary_violation = float(np.any(proposed != new_uav))
        speed_violation = float(action.speed < cfg.v_min or action.speed > cfg.v_max)

        users = self._move_users(state.users_xy, rng)
        new_state = WorldState(uav_xyz=new_uav, users_xy=users,
                               step_index=state.step_index + 1)

        snr_db, snr_lin, uplink = self._sample_uplink(new_state, rng)
        downlink = channel.redraw_fading(uplink, rng)
        rates = channel.per_user_rate(downlink, cfg.tx_power, cfg.num_users,
                                      cfg.noise_power, cfg.bandwidth_hz)
        rates_per_hz = rates / cfg.bandwidth_hz
        reward = self._reward_fn(rates_per_hz, snr_db, delta_a)

        cx, cy = cfg.cluster_center
        outcome = StepOutcome(
            observation=snr_db / OBS_DB_SCALE,
            reward=reward,
            done=new_state.step_index >= cfg.horizon,
            diagnostics={
                "delta_a": delta_a,
                "boundary_violation": boundary_violation,
                "speed_violation": speed_violation,
                "per_user_rate": rates,
                "sum_rate": float(np.sum(rates)),
                "sum_rss_snr": snr_lin,
                "speed": speed,
                "height": float(new_uav[2]),
                "dist_to_cluster": float(np.hypot(new_uav[0] - cx, new_uav[1] - cy)),
            },
        )
        return new_state, outcome

    def _move_users(self, users_xy, rng):
        """Gaussian random walk, radially reflected back into the cluster disk."""
        cfg = self.config
        if cfg.user_step_sigma <= 0.0:
            return users_xy
        if cfg.cluster_radius <= 0.0:
            return users_xy
        center = np.asarray(cfg.cluster_center)
        proposed = users_xy + rng.normal(0.0, cfg.user_step_sigma, size=users_xy.shape)
        rel = proposed - center
        dist = np.hypot(rel[:, 0], rel[:, 1])
        # Fold the radius into [0, R] (sawtooth reflection), keeping the angle.
        folded = np.mod(dist, 2.0 * cfg.cluster_radius)
        folded = np.where(folded > cfg.cluster_radius,
                          2.0 * cfg.cluster_radius - folded, folded)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(dist[:, None] > 0.0, rel / np.maximum(dist, 1e-300)[:, None], 0.0)
        return center + unit * folded[:, None]

    def _sample_uplink(self, state: WorldState, rng):
        """Returns (per-user SNR in dB, linear SNR sum, link realization)."""
        cfg = self.config
        geom = channel.LinkGeometry.from_positions(state.uav_xyz, state.users_xy)
        link = channel.sample_link(self.env, geom, self.antenna, cfg.carrier_hz, rng)
        snr = channel.rss(link, cfg.pilot_power) / cfg.noise_power
        return 10.0 * np.log10(snr), float(np.sum(snr)), link
