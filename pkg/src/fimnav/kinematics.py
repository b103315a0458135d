"""UAV state, the position transition and enforcement of the motion limits."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .geometry import Vec3, wrap_angle
from .sensing import SensorRole

HALF_PI = math.pi / 2


@dataclass(frozen=True)
class KinematicLimits:
    """Speed bounds (m/step), turn-rate bounds (rad/step), altitude box (m), step (s)."""

    v_min: float = 0.5
    v_max: float = 1.0
    phi_max: float = math.radians(50.0)
    theta_max: float = math.radians(50.0)
    z_min: float = 2.0
    z_max: float = 25.0
    dt: float = 1.0

    def __post_init__(self):
        if not 0 <= self.v_min <= self.v_max:
            raise ValueError("need 0 <= v_min <= v_max")
        if self.z_min > self.z_max:
            raise ValueError("need z_min <= z_max")
        if self.phi_max < 0 or self.theta_max < 0:
            raise ValueError("turn-rate limits must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class UavState:
    id: int
    position: Vec3
    heading: float
    tilt: float
    role: SensorRole


@dataclass(frozen=True)
class ControlInput:
    """Displacement for one step; ``infeasible`` marks a clamp that could not honour every limit."""

    u: Vec3
    infeasible: bool = False


def control_from_polar(v: float, heading: float, tilt: float, dt: float = 1.0) -> ControlInput:
    if v < 0:
        raise ValueError("speed must be non-negative")
    s = v * dt
    ct = math.cos(tilt)
    return ControlInput(np.array([s * math.cos(heading) * ct,
                                  s * math.sin(heading) * ct,
                                  s * math.sin(tilt)]))


def heading_of(u) -> Optional[tuple[float, float]]:
    """Heading and tilt of a displacement; ``None`` for the zero vector.

    A purely vertical displacement reports heading ``nan`` so callers can keep
    the previous one.
    """
    ux, uy, uz = float(u[0]), float(u[1]), float(u[2])
    norm = math.sqrt(ux * ux + uy * uy + uz * uz)
    if norm == 0.0:
        return None
    tilt = math.atan2(uz, math.hypot(ux, uy))
    if ux == 0.0 and uy == 0.0:
        return math.nan, tilt
    return math.atan2(uy, ux), tilt


def apply_transition(state: UavState, u: ControlInput | Vec3) -> UavState:
    vec = np.asarray(u.u if isinstance(u, ControlInput) else u, dtype=float)
    hd = heading_of(vec)
    if hd is None:
        heading, tilt = state.heading, state.tilt
    else:
        heading, tilt = hd
        if math.isnan(heading):
            heading = state.heading
    return replace(state, position=state.position + vec, heading=heading, tilt=tilt)


def clamp_control(u_raw: ControlInput | Vec3, prev: UavState,
                  limits: KinematicLimits) -> ControlInput:
    """Project a raw displacement onto the turn-rate, speed and altitude limits.

    Order: clip heading/tilt changes toward the raw direction, then scale the
    norm into the speed band, then clip the vertical component to the altitude
    box and restore the speed through the horizontal components.
    """
    raw = np.asarray(u_raw.u if isinstance(u_raw, ControlInput) else u_raw, dtype=float)
    hd = heading_of(raw)
    if hd is None:
        # hovering is not allowed: keep flying along the previous direction
        norm = 0.0
        heading, tilt = prev.heading, prev.tilt
    else:
        norm = float(np.linalg.norm(raw))
        heading, tilt = hd
        if math.isnan(heading):
            heading = prev.heading

    d_heading = wrap_angle(heading - prev.heading)
    d_heading = max(-limits.phi_max, min(limits.phi_max, d_heading))
    heading = wrap_angle(prev.heading + d_heading)
    tilt = max(prev.tilt - limits.theta_max, min(prev.tilt + limits.theta_max, tilt))
    tilt = max(-HALF_PI, min(HALF_PI, tilt))

    s = max(limits.v_min * limits.dt, min(limits.v_max * limits.dt, norm))
    ct = math.cos(tilt)
    u = [s * math.cos(heading) * ct, s * math.sin(heading) * ct, s * math.sin(tilt)]

    z = float(prev.position[2])
    infeasible = False
    uz = u[2]
    if z + uz > limits.z_max:
        uz = limits.z_max - z
    elif z + uz < limits.z_min:
        uz = limits.z_min - z
    if uz != u[2]:
        if abs(uz) > s:
            # previous state already outside the box: head back at full allowed speed
            uz = math.copysign(s, uz)
            infeasible = True
        h = math.sqrt(max(0.0, s * s - uz * uz))
        u = [h * math.cos(heading), h * math.sin(heading), uz]
        new_tilt = math.asin(max(-1.0, min(1.0, uz / s))) if s > 0 else 0.0
        if abs(new_tilt - prev.tilt) > limits.theta_max + 1e-12:
            infeasible = True
    return ControlInput(np.array(u), infeasible)
