"""RSS-derived ranging and bearing observations with LOS/NLOS regimes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    ObstacleBox,
    SphericalDirection,
    Vec3,
    relative_geometry,
    segment_intersects_box,
    wrap_angle,
)

LN10_OVER_10 = math.log(10.0) / 10.0


@dataclass(frozen=True)
class SensorRole:
    """Sensing capability of a UAV: ranging (kappa) and/or bearing (beta)."""

    ranging: bool
    bearing: bool

    def __post_init__(self):
        if not (self.ranging or self.bearing):
            raise ValueError("a UAV must carry at least one of ranging/bearing")

    @property
    def kappa(self) -> int:
        return int(self.ranging)

    @property
    def beta(self) -> int:
        return int(self.bearing)

    @property
    def name(self) -> str:
        if self.ranging and self.bearing:
            return "joint"
        return "ranging" if self.ranging else "bearing"


RANGING = SensorRole(True, False)
BEARING = SensorRole(False, True)
JOINT = SensorRole(True, True)


@dataclass(frozen=True)
class ChannelParams:
    """Path-loss exponent, shadowing-to-exponent ratios (dB) and bearing std (rad)."""

    gamma: float = 2.0
    sigma_ratio_los: float = 1.7
    sigma_ratio_nlos: float = 3.2
    sigma_bearing: float = math.radians(10.0)

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.sigma_ratio_los <= 0 or self.sigma_ratio_nlos <= 0:
            raise ValueError("shadowing ratios must be positive")
        if self.sigma_bearing <= 0:
            raise ValueError("bearing std must be positive")

    def sigma_r0(self, los: int) -> float:
        """Ranging std at the 1 m reference distance."""
        ratio = self.sigma_ratio_los if los else self.sigma_ratio_nlos
        return LN10_OVER_10 * ratio


@dataclass(frozen=True)
class Measurement:
    """One UAV's estimate at step ``timestamp`` together with where it was taken."""

    uav_id: int
    timestamp: int
    range_est: Optional[float]
    bearing_est: Optional[SphericalDirection]
    los: int
    uav_position: Vec3

    @property
    def kappa(self) -> int:
        return 0 if self.range_est is None else 1

    @property
    def beta(self) -> int:
        return 0 if self.bearing_est is None else 1


def ranging_std(d: float, params: ChannelParams, los: int) -> float:
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    return params.sigma_r0(los) * d ** (params.gamma / 2.0)


def los_state(uav, source, obstacles: Sequence[ObstacleBox]) -> int:
    """1 when the UAV-source segment clears every obstacle, else 0."""
    for box in obstacles:
        if segment_intersects_box(uav, source, box):
            return 0
    return 1


def draw_range_measurement(d: float, params: ChannelParams, los: int,
                           rng: np.random.Generator) -> float:
    return d + ranging_std(d, params, los) * rng.standard_normal()


def draw_bearing_measurement(truth: SphericalDirection, los: int,
                             params: ChannelParams,
                             rng: np.random.Generator) -> SphericalDirection:
    if los:
        n_phi, n_theta = rng.standard_normal(2) * params.sigma_bearing
        phi = wrap_angle(truth.azimuth + n_phi)
        theta = min(math.pi / 2, max(-math.pi / 2, truth.elevation + n_theta))
        return SphericalDirection(phi, theta)
    # NLOS outlier carries no information about the source
    phi = wrap_angle(rng.uniform(-math.pi, math.pi))
    theta = rng.uniform(-math.pi / 2, math.pi / 2)
    return SphericalDirection(phi, theta)


def sense(uav, source, obstacles: Sequence[ObstacleBox], params: ChannelParams,
          rng: np.random.Generator, k: int) -> Measurement:
    """Produce the role-dependent measurement of ``uav`` (a ``UavState``) at step ``k``."""
    position = np.array(uav.position, dtype=float)
    d, direction = relative_geometry(position, source)
    los = los_state(position, source, obstacles)
    range_est = draw_range_measurement(d, params, los, rng) if uav.role.ranging else None
    bearing_est = (draw_bearing_measurement(direction, los, params, rng)
                   if uav.role.bearing else None)
    return Measurement(uav.id, k, range_est, bearing_est, los, position)
