"""Projected-gradient navigation step for one UAV.

The raw displacement is ``-xi * P * grad C - N (N^T N)^-1 g`` where ``g``
stacks the violated safety distances (to peers, to the source estimate and
to the closest obstacle) and ``N`` their gradients with respect to the
UAV position. The kinematic clamp is applied last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fisher import (
    Criterion,
    SingularFimError,
    cost_values,
    fim_terms,
    view_arrays,
)
from .geometry import ObstacleBox, closest_obstacle, nearest_point_on_box
from .kinematics import ControlInput, KinematicLimits, UavState, clamp_control, control_from_polar
from .network import NetworkView
from .sensing import ChannelParams

COINCIDENT_OFFSET = 1e-6
RANK_RTOL = 1e-8


@dataclass(frozen=True)
class ControlConfig:
    xi: float = 1.0
    fd_step: float = 1e-3
    d_star_uav: float = 1.0
    d_star_source: float = 50.0
    d_star_obstacle: float = 5.0

    def __post_init__(self):
        if self.xi <= 0 or self.fd_step <= 0:
            raise ValueError("xi and fd_step must be positive")
        if min(self.d_star_uav, self.d_star_source, self.d_star_obstacle) <= 0:
            raise ValueError("safety distances must be positive")


@dataclass
class ConstraintSet:
    """Violated constraint values ``g`` (all negative) and gradients ``N`` (3 x m)."""

    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    normals: np.ndarray = field(default_factory=lambda: np.zeros((3, 0)))
    kinds: list[str] = field(default_factory=list)
    perturbed: bool = False

    def __len__(self):
        return len(self.values)

    @property
    def empty(self) -> bool:
        return len(self.values) == 0


@dataclass
class ControlDecision:
    control: ControlInput
    fallback: bool
    cost: float
    constraints: int = 0
    dropped_constraints: int = 0


class _FimEvaluator:
    """Holds the fixed part of a view so probes only recompute the owner's entry.

    ``others_fim`` may be supplied when the caller already summed the peer
    entries at the same source estimate.
    """

    def __init__(self, owner: int, view: NetworkView, params: ChannelParams,
                 others_fim: np.ndarray | None = None):
        own = view.entries.get(owner)
        if own is None:
            raise KeyError(f"view of UAV {owner} has no own entry")
        self.params = params
        self.own = (own.kappa, own.beta, own.los)
        self.others_fim = others_fim
        if others_fim is None:
            peers = NetworkView(view.owner, {j: m for j, m in view.entries.items() if j != owner})
            self._others = view_arrays(peers) if peers.entries else None

    def fims(self, owner_positions: np.ndarray, source) -> np.ndarray:
        """FIMs for a batch of candidate owner positions, shape (B, 3, 3)."""
        base = self.others_fim
        if base is None:
            base = (np.zeros((3, 3)) if self._others is None
                    else fim_terms(*self._others, source, self.params).sum(axis=0))
        kappa, beta, los = self.own
        return base + fim_terms(owner_positions, kappa, beta, los, source, self.params)


_FD_OFFSETS = np.vstack([np.zeros(3), np.eye(3), -np.eye(3)])


def _cost_and_gradient(evaluator: _FimEvaluator, position, source, criterion, fd_step):
    probes = np.asarray(position, dtype=float) + fd_step * _FD_OFFSETS
    c = cost_values(evaluator.fims(probes, source), criterion)
    if np.any(np.isnan(c)):
        raise SingularFimError("singular FIM at the owner position or a probe")
    grad = (c[1:4] - c[4:7]) / (2.0 * fd_step)
    return float(c[0]), grad


def cost_gradient(owner: UavState, view: NetworkView, source_estimate, criterion: Criterion,
                  params: ChannelParams, fd_step: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of the cost w.r.t. the owner's own position.

    Peer entries stay fixed at their stored (possibly stale) positions.
    """
    ev = _FimEvaluator(owner.id, view, params)
    _, grad = _cost_and_gradient(ev, owner.position, source_estimate,
                                 Criterion.parse(criterion), fd_step)
    return grad


def _unit_away(owner_pos, other) -> tuple[np.ndarray, float, bool]:
    diff = owner_pos - other
    d = float(np.linalg.norm(diff))
    if d < 1e-12:
        diff = owner_pos + np.array([COINCIDENT_OFFSET, 0.0, 0.0]) - other
        return diff / np.linalg.norm(diff), d, True
    return diff / d, d, False


def _box_exit(p, box: ObstacleBox) -> np.ndarray:
    """Outward normal of the face nearest to a point inside the box."""
    lo, hi = np.array(box.lo), np.array(box.hi)
    gaps = np.concatenate([p - lo, hi - p])
    idx = int(np.argmin(gaps))
    n = np.zeros(3)
    n[idx % 3] = -1.0 if idx < 3 else 1.0
    return n


def active_constraints(owner_position, peer_positions: Sequence, source_estimate,
                       obstacles: Sequence[ObstacleBox], config: ControlConfig) -> ConstraintSet:
    p = np.asarray(owner_position, dtype=float)
    values, normals, kinds = [], [], []
    perturbed = False
    if len(peer_positions):
        peers = np.asarray(peer_positions, dtype=float).reshape(-1, 3)
        dist = np.sqrt(((peers - p) ** 2).sum(axis=1))
        for idx in np.flatnonzero(dist < config.d_star_uav):
            n, d, flag = _unit_away(p, peers[idx])
            values.append(d - config.d_star_uav)
            normals.append(n)
            kinds.append("uav")
            perturbed |= flag
    if source_estimate is not None:
        n, d, flag = _unit_away(p, np.asarray(source_estimate, dtype=float))
        if d < config.d_star_source:
            values.append(d - config.d_star_source)
            normals.append(n)
            kinds.append("source")
            perturbed |= flag
    idx, d = closest_obstacle(p, obstacles)
    if idx >= 0 and d < config.d_star_obstacle:
        box = obstacles[idx]
        if d == 0.0:
            n = _box_exit(p, box)
        else:
            n = (p - nearest_point_on_box(p, box)) / d
        values.append(d - config.d_star_obstacle)
        normals.append(n)
        kinds.append("obstacle")
    if not values:
        return ConstraintSet(perturbed=perturbed)
    return ConstraintSet(np.array(values), np.array(normals).T, kinds, perturbed)


def independent_columns(constraints: ConstraintSet) -> ConstraintSet:
    """Keep a linearly independent subset, most violated constraints first."""
    if len(constraints) <= 1:
        return constraints
    order = np.argsort(constraints.values, kind="stable")  # most negative first
    kept: list[int] = []
    for idx in order:
        trial = kept + [int(idx)]
        s = np.linalg.svd(constraints.normals[:, trial], compute_uv=False)
        if s[-1] > RANK_RTOL * s[0]:
            kept = trial
        if len(kept) == 3:
            break
    kept.sort()
    return ConstraintSet(constraints.values[kept], constraints.normals[:, kept],
                         [constraints.kinds[i] for i in kept], constraints.perturbed)


def projector(normals: np.ndarray) -> np.ndarray:
    """``I - N (N^T N)^-1 N^T``; identity when ``N`` has no columns."""
    if normals.shape[1] == 0:
        return np.eye(3)
    return np.eye(3) - normals @ np.linalg.solve(normals.T @ normals, normals.T)


def projected_parts(direction, constraints: ConstraintSet):
    """Split the step into the projected descent ``P @ direction`` and the restoration
    ``-N (N^T N)^-1 g``; also report how many dependent constraints were dropped."""
    direction = np.asarray(direction, dtype=float)
    if constraints.empty:
        return direction.copy(), np.zeros(3), 0
    reduced = independent_columns(constraints)
    N, g = reduced.normals, reduced.values
    gram = N.T @ N
    P = np.eye(3) - N @ np.linalg.solve(gram, N.T)
    restore = -N @ np.linalg.solve(gram, g)
    return P @ direction, restore, len(constraints) - len(reduced)


def projected_step(direction, constraints: ConstraintSet) -> tuple[np.ndarray, int]:
    """``P @ direction - N (N^T N)^-1 g`` and the number of dropped dependent constraints."""
    descent, restore, dropped = projected_parts(direction, constraints)
    return descent + restore, dropped


def budget_step(descent: np.ndarray, restore: np.ndarray, max_step: float) -> np.ndarray:
    """Shrink the descent part so that the sum fits in ``max_step``.

    The two parts are orthogonal, so restoration keeps priority instead of
    being scaled away together with a large gradient.
    """
    r = float(np.linalg.norm(restore))
    if r >= max_step:
        return restore * (max_step / r)
    t = float(np.linalg.norm(descent))
    room = math.sqrt(max_step * max_step - r * r)
    if t > room:
        descent = descent * (room / t)
    return descent + restore


def projected_gradient_step(grad, constraints: ConstraintSet, xi: float) -> np.ndarray:
    u, _ = projected_step(-xi * np.asarray(grad, dtype=float), constraints)
    return u


def random_fallback(prev_heading: tuple[float, float], limits: KinematicLimits,
                    rng: np.random.Generator) -> ControlInput:
    """Random move roughly along the previous direction, inside the speed and turn limits."""
    heading, tilt = prev_heading
    v = rng.uniform(limits.v_min, limits.v_max)
    new_heading = heading + rng.uniform(-limits.phi_max, limits.phi_max)
    lo = max(-math.pi / 2, tilt - limits.theta_max)
    hi = min(math.pi / 2, tilt + limits.theta_max)
    new_tilt = min(hi, max(lo, tilt + rng.uniform(-limits.theta_max, limits.theta_max)))
    return control_from_polar(v, new_heading, new_tilt, limits.dt)


def compute_control(owner: UavState, view: NetworkView, source_estimate,
                    obstacles: Sequence[ObstacleBox], params: ChannelParams,
                    limits: KinematicLimits, config: ControlConfig, criterion: Criterion,
                    rng: np.random.Generator, *,
                    others_fim: np.ndarray | None = None) -> ControlDecision:
    """One navigation decision. Always returns a move within the kinematic limits.

    A singular FIM switches to the random fallback; the constraint restoration
    term is still added so safety distances keep being enforced.
    ``others_fim`` optionally passes the precomputed information of the peer
    entries at ``source_estimate``.
    """
    peers = [m.uav_position for j, m in view.entries.items() if j != owner.id]
    constraints = active_constraints(owner.position, peers, source_estimate, obstacles, config)
    fallback = False
    c = math.nan
    try:
        if source_estimate is None:
            raise SingularFimError("no source estimate")
        ev = _FimEvaluator(owner.id, view, params, others_fim)
        c, grad = _cost_and_gradient(ev, owner.position, source_estimate,
                                     Criterion.parse(criterion), config.fd_step)
        direction = -config.xi * grad
    except SingularFimError:
        fallback = True
        direction = random_fallback((owner.heading, owner.tilt), limits, rng).u
    descent, restore, dropped = projected_parts(direction, constraints)
    raw = budget_step(descent, restore, limits.v_max * limits.dt)
    u = clamp_control(raw, owner, limits)
    return ControlDecision(u, fallback, c, len(constraints), dropped)
