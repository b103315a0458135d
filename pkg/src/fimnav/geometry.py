"""3D vector helpers, UAV-to-source geometry and axis-aligned obstacle boxes.

Positions are plain ``numpy`` arrays of shape ``(3,)`` in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

Vec3 = np.ndarray


class DegenerateGeometryError(ValueError):
    """Raised when two points that must differ coincide."""


class SphericalDirection(NamedTuple):
    """Azimuth in (-pi, pi] and elevation in [-pi/2, pi/2], radians."""

    azimuth: float
    elevation: float


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=float)


def as_vec3(p) -> Vec3:
    arr = np.asarray(p, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite coordinates: {arr}")
    return arr


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


@dataclass(frozen=True)
class ObstacleBox:
    """Closed axis-aligned box ``[lo, hi]``."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("box corners must be 3-vectors")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"box min corner {lo} exceeds max corner {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_corners(cls, a: Sequence[float], b: Sequence[float]) -> "ObstacleBox":
        """Build a box from two opposite corners given in any order."""
        return cls(tuple(map(min, a, b)), tuple(map(max, a, b)))

    def contains(self, p) -> bool:
        return all(l <= v <= h for l, v, h in zip(self.lo, p, self.hi))


def relative_geometry(uav, source) -> tuple[float, SphericalDirection]:
    """Distance, azimuth and elevation measured from ``uav`` toward ``source``.

    Azimuth is set to 0 when the source is straight above or below.
    """
    dx = float(source[0]) - float(uav[0])
    dy = float(source[1]) - float(uav[1])
    dz = float(source[2]) - float(uav[2])
    d = math.sqrt(dx * dx + dy * dy + dz * dz)
    if d == 0.0:
        raise DegenerateGeometryError("UAV and source coincide")
    if dx == 0.0 and dy == 0.0:
        phi = 0.0
    else:
        phi = wrap_angle(math.atan2(dy, dx))
    theta = math.atan2(dz, math.hypot(dx, dy))  # better conditioned than asin near the poles
    return d, SphericalDirection(phi, theta)


def direction_vector(direction: SphericalDirection) -> Vec3:
    phi, theta = direction
    ct = math.cos(theta)
    return np.array([math.cos(phi) * ct, math.sin(phi) * ct, math.sin(theta)])


def segment_intersects_box(a, b, box: ObstacleBox) -> bool:
    """Slab test for the closed segment ``[a, b]`` against a closed box."""
    # fixed endpoint order so the rounding, and hence the answer, is symmetric in (a, b)
    if tuple(map(float, b)) < tuple(map(float, a)):
        a, b = b, a
    t0, t1 = 0.0, 1.0
    for axis in range(3):
        a_i = float(a[axis])
        delta = float(b[axis]) - a_i
        lo, hi = box.lo[axis], box.hi[axis]
        if delta == 0.0:
            if a_i < lo or a_i > hi:
                return False
            continue
        ta = (lo - a_i) / delta
        tb = (hi - a_i) / delta
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False
    return True


def nearest_point_on_box(p, box: ObstacleBox) -> Vec3:
    return np.clip(np.asarray(p, dtype=float), box.lo, box.hi)


def distance_point_to_box(p, box: ObstacleBox) -> float:
    s = 0.0
    for axis in range(3):
        v = float(p[axis])
        if v < box.lo[axis]:
            s += (box.lo[axis] - v) ** 2
        elif v > box.hi[axis]:
            s += (v - box.hi[axis]) ** 2
    return math.sqrt(s)


def closest_obstacle(p, obstacles: Sequence[ObstacleBox]) -> tuple[int, float]:
    """Index of and distance to the nearest obstacle; ``(-1, inf)`` if none."""
    best, best_d = -1, math.inf
    for idx, box in enumerate(obstacles):
        d = distance_point_to_box(p, box)
        if d < best_d:
            best, best_d = idx, d
    return best, best_d
