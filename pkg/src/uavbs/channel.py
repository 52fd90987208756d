"""Air-to-ground propagation model: geometry, LOS probability, shadowing,
fading, antenna gains, received signal strength and per-user data rate.

All operations broadcast over numpy arrays, so a whole user cluster can be
evaluated in one call. Randomness always comes from an explicit
``numpy.random.Generator`` owned by the caller.
"""

from dataclasses import dataclass

import numpy as np

from .validation import check_finite_array, check_positive

SPEED_OF_LIGHT = 299792458.0  # m/s


@dataclass(frozen=True)
class EnvParams:
    """Radio-environment parameters of the elevation-based air-to-ground model.

    phi is dimensionless, psi is per-degree; mu_* are the mean excess losses
    in dB, a_* (dB) and c_* (per-degree) shape the elevation-dependent
    shadowing spread, for the LOS and NLOS modes respectively.
    """

    phi: float
    psi: float
    mu_los: float
    mu_nlos: float
    a_los: float
    a_nlos: float
    c_los: float
    c_nlos: float

    def __post_init__(self):
        check_positive(self.phi, "phi")
        check_positive(self.psi, "psi")
        for name in ("a_los", "a_nlos", "c_los", "c_nlos"):
            check_positive(getattr(self, name), name)
        if self.mu_los < 0 or self.mu_nlos < 0:
            raise ValueError("mean excess losses mu_* must be >= 0")


#: Named parameter sets for the four standard environment types.
ENV_PRESETS = {
    "highrise": EnvParams(phi=27.23, psi=0.08, mu_los=1.5, mu_nlos=29.0,
                          a_los=7.37, a_nlos=37.08, c_los=0.03, c_nlos=0.03),
    "denseurban": EnvParams(phi=12.08, psi=0.11, mu_los=1.0, mu_nlos=20.0,
                            a_los=8.96, a_nlos=35.97, c_los=0.04, c_nlos=0.04),
    "urban": EnvParams(phi=9.61, psi=0.16, mu_los=0.6, mu_nlos=17.0,
                       a_los=10.39, a_nlos=29.6, c_los=0.05, c_nlos=0.03),
    "suburban": EnvParams(phi=4.88, psi=0.43, mu_los=0.0, mu_nlos=18.0,
                          a_los=11.25, a_nlos=32.17, c_los=0.06, c_nlos=0.03),
}


def env_preset(name: str) -> EnvParams:
    """Look up an environment preset by name (highrise | denseurban | urban | suburban)."""
    try:
        return ENV_PRESETS[name]
    except KeyError:
        raise KeyError(
            f"unknown environment preset {name!r}; "
            f"choose one of {sorted(ENV_PRESETS)}"
        ) from None


@dataclass(frozen=True)
class AntennaPattern:
    """Directional antenna with a conical main lobe of width ``beamwidth_w``.

    Use :meth:`from_beamwidth`, which ties the main-lobe gain to 2.6/w**2 and
    the side-lobe gain to 1/100 of it.
    """

    beamwidth_w: float  # radians
    gain_main: float
    gain_side: float

    @classmethod
    def from_beamwidth(cls, beamwidth_w: float) -> "AntennaPattern":
        w = check_positive(beamwidth_w, "beamwidth_w")
        if w >= np.pi:
            raise ValueError("beamwidth_w must be < pi")
        g = 2.6 / w**2
        return cls(beamwidth_w=w, gain_main=g, gain_side=g / 100.0)


@dataclass(frozen=True)
class LinkGeometry:
    """Geometry of one (or, with array fields, many) UAV-to-user link(s)."""

    horizontal_dist: np.ndarray  # m, UAV ground projection to user
    height: float                # m
    dist_3d: np.ndarray          # m
    elevation_deg: np.ndarray    # degrees, in (0, 90]

    @classmethod
    def from_positions(cls, uav_xyz, user_xy) -> "LinkGeometry":
        uav_xyz = check_finite_array(uav_xyz, "uav_xyz")
        user_xy = check_finite_array(user_xy, "user_xy")
        height = float(uav_xyz[2])
        check_positive(height, "uav height")
        delta = user_xy - uav_xyz[:2]
        horizontal = np.hypot(delta[..., 0], delta[..., 1])
        return cls(
            horizontal_dist=horizontal,
            height=height,
            dist_3d=np.hypot(height, horizontal),
            elevation_deg=np.degrees(np.arctan2(height, horizontal)),
        )


@dataclass(frozen=True)
class LinkRealization:
    """One stochastic draw of a link: mode, large-scale and small-scale gains.

    ``total_gain = antenna_gain * fspl_gain * fading_gain / shadow_excess``;
    the log-normal shadowing term acts as an excess attenuation.
    """

    is_los: np.ndarray        # bool
    shadow_excess: np.ndarray  # linear power attenuation factor, > 0
    fading_gain: np.ndarray   # unit-mean small-scale power gain
    antenna_gain: np.ndarray
    fspl_gain: np.ndarray     # free-space path gain (4*pi*d*f/c)**-2
    total_gain: np.ndarray


def elevation_angle_deg(uav_xyz, user_xy):
    """Elevation angle of the UAV seen from the user, in degrees (0, 90].

    A user directly under the UAV gets 90 by continuity.
    """
    return LinkGeometry.from_positions(uav_xyz, user_xy).elevation_deg


def los_probability(env: EnvParams, elevation_deg):
    """Probability that the link is line-of-sight at the given elevation."""
    theta = np.asarray(elevation_deg, dtype=float)
    return 1.0 / (1.0 + env.phi * np.exp(-env.psi * (theta - env.phi)))


def shadowing_sigma_db(a: float, c: float, elevation_deg):
    """Elevation-dependent shadowing standard deviation in dB: a*exp(-c*theta)."""
    theta = np.asarray(elevation_deg, dtype=float)
    return a * np.exp(-c * theta)


def free_space_gain(dist_3d, carrier_hz):
    """Free-space path power gain (4*pi*d*f/c)**-2."""
    return (4.0 * np.pi * np.asarray(dist_3d, dtype=float) * carrier_hz / SPEED_OF_LIGHT) ** -2


def antenna_gain(geom: LinkGeometry, pattern: AntennaPattern):
    """Main-lobe gain where the user falls inside the antenna cone, else side-lobe.

    The cone condition is horizontal_dist < height / tan(pi/2 - w/2).
    """
    threshold = geom.height / np.tan(np.pi / 2.0 - pattern.beamwidth_w / 2.0)
    return np.where(geom.horizontal_dist < threshold, pattern.gain_main, pattern.gain_side)


def sample_link(env: EnvParams, geom: LinkGeometry, pattern: AntennaPattern,
                carrier_hz: float, rng: np.random.Generator) -> LinkRealization:
    """Draw one stochastic realization per link in ``geom``.

    LOS/NLOS mode is Bernoulli with the elevation-based LOS probability;
    shadowing is log-normal with the mode's (mu, sigma(theta)) in dB, applied
    as excess attenuation; small-scale power fading is a unit-mean Gamma with
    shape 10 under LOS and unit-mean exponential under NLOS.
    """
    theta = check_finite_array(geom.elevation_deg, "elevation_deg")
    shape = theta.shape

    p_los = los_probability(env, theta)
    is_los = rng.random(shape) < p_los

    mu = np.where(is_los, env.mu_los, env.mu_nlos)
    sigma = np.where(is_los,
                     shadowing_sigma_db(env.a_los, env.c_los, theta),
                     shadowing_sigma_db(env.a_nlos, env.c_nlos, theta))
    shadow_db = rng.normal(mu, sigma)
    shadow_excess = 10.0 ** (shadow_db / 10.0)

    fading_los = rng.gamma(shape=10.0, scale=0.1, size=shape)
    fading_nlos = rng.exponential(scale=1.0, size=shape)
    fading = np.where(is_los, fading_los, fading_nlos)

    ant = antenna_gain(geom, pattern)
    fspl = free_space_gain(geom.dist_3d, carrier_hz)
    return LinkRealization(
        is_los=is_los,
        shadow_excess=shadow_excess,
        fading_gain=fading,
        antenna_gain=ant,
        fspl_gain=fspl,
        total_gain=ant * fspl * fading / shadow_excess,
    )


def redraw_fading(link: LinkRealization, rng: np.random.Generator) -> LinkRealization:
    """New realization sharing the large-scale terms (mode, shadowing) of ``link``
    but with freshly drawn small-scale fading.

    Models a second carrier inside the same coherence interval, e.g. the
    downlink paired with an uplink measurement.
    """
    shape = np.shape(link.is_los)
    fading_los = rng.gamma(shape=10.0, scale=0.1, size=shape)
    fading_nlos = rng.exponential(scale=1.0, size=shape)
    fading = np.where(link.is_los, fading_los, fading_nlos)
    return LinkRealization(
        is_los=link.is_los,
        shadow_excess=link.shadow_excess,
        fading_gain=fading,
        antenna_gain=link.antenna_gain,
        fspl_gain=link.fspl_gain,
        total_gain=link.antenna_gain * link.fspl_gain * fading / link.shadow_excess,
    )


def rss(link: LinkRealization, pilot_power: float):
    """Received signal strength in watts for a pilot of ``pilot_power`` watts."""
    check_positive(pilot_power, "pilot_power")
    return pilot_power * link.total_gain


def per_user_rate(link: LinkRealization, total_power: float, num_users: int,
                  noise_power: float, bandwidth_hz: float):
    """Downlink rate in bits/s under equal time division across ``num_users``.

    Each user is served for a 1/K share of the slot with power P/K, giving
    (W/K) * log2(1 + (P/K) * gain / noise).
    """
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    check_positive(noise_power, "noise_power")
    snr = (total_power / num_users) * link.total_gain / noise_power
    return (bandwidth_hz / num_users) * np.log2(1.0 + snr)
