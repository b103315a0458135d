"""Multi-hop dissemination of measurements with hop-dependent latency.

A measurement produced by UAV ``j`` reaches UAV ``i`` after ``h_ij - 1`` steps,
where ``h_ij`` is the hop count in the disk graph of radius ``r_max``. Peers
farther than ``h_max`` hops are not refreshed; the receiver keeps whatever it
last stored for them.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .sensing import Measurement

UNREACHABLE = np.inf


class DisseminationError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    r_max: float = 100.0
    h_max: int = 1

    def __post_init__(self):
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")
        if self.h_max < 1:
            raise ValueError("h_max must be at least 1")


@dataclass
class NetworkView:
    """What UAV ``owner`` currently knows: at most one measurement per peer."""

    owner: int
    entries: dict[int, Measurement] = field(default_factory=dict)

    def age(self, peer: int, k: int) -> int:
        return k - self.entries[peer].timestamp

    def ages(self, k: int) -> dict[int, int]:
        return {j: k - m.timestamp for j, m in self.entries.items()}

    def copy(self) -> "NetworkView":
        return NetworkView(self.owner, dict(self.entries))

    def __len__(self):
        return len(self.entries)


def connectivity_graph(positions, r_max: float) -> np.ndarray:
    """Boolean adjacency: edge iff the inter-UAV distance is at most ``r_max``."""
    p = np.asarray(positions, dtype=float)
    diff = p[:, None, :] - p[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    adj = dist <= r_max
    np.fill_diagonal(adj, False)
    return adj


def hop_counts(positions, r_max: float) -> np.ndarray:
    """Shortest-path hop counts (float array); ``inf`` marks unreachable pairs.

    Breadth-first search run from every node at once, one boolean product per level.
    """
    adj = connectivity_graph(positions, r_max).astype(np.int64)
    n = len(adj)
    hops = np.full((n, n), UNREACHABLE)
    reached = np.eye(n, dtype=bool)
    frontier = reached.copy()
    hops[reached] = 0.0
    level = 0
    while frontier.any():
        level += 1
        frontier = ((frontier.astype(np.int64) @ adj) > 0) & ~reached
        hops[frontier] = level
        reached |= frontier
    return hops


class MeasurementHistory:
    """Sliding window of the last ``depth`` fresh measurement batches."""

    def __init__(self, depth: int):
        self.depth = depth
        self._batches: OrderedDict[int, dict[int, Measurement]] = OrderedDict()
        self._first: dict[int, Measurement] = {}

    def push(self, k: int, fresh: Sequence[Measurement]) -> None:
        self._batches[k] = {m.uav_id: m for m in fresh}
        self._batches.move_to_end(k)
        for m in fresh:
            self._first.setdefault(m.uav_id, m)
        while len(self._batches) > self.depth:
            self._batches.popitem(last=False)

    def lookup(self, peer: int, step: int) -> Measurement | None:
        batch = self._batches.get(step)
        if batch is not None:
            return batch.get(peer)
        if step < min(self._batches, default=0):
            # before the simulation start: the oldest measurement stands in
            first = self._first.get(peer)
            if first is not None and first.timestamp >= step:
                return first
        return None


def disseminate(k: int, fresh: Sequence[Measurement], positions, config: NetworkConfig,
                views: Sequence[NetworkView],
                history: MeasurementHistory) -> list[NetworkView]:
    """Return the views after the step-``k`` exchange; inputs are not modified.

    ``fresh`` lists one step-``k`` measurement per UAV, in the same order as
    ``positions`` and ``views``. The batch is recorded into ``history``
    (re-recording the same step is harmless).
    """
    ids = [m.uav_id for m in fresh]
    if len(set(ids)) != len(ids):
        raise DisseminationError("duplicate UAV ids in fresh batch")
    if any(m.timestamp != k for m in fresh):
        raise DisseminationError(f"fresh batch must be stamped with step {k}")
    if len(views) != len(fresh) or np.shape(positions) != (len(fresh), 3):
        raise DisseminationError("fresh batch, positions and views disagree in size")
    if [v.owner for v in views] != ids:
        raise DisseminationError("views must be ordered like the fresh batch")

    history.push(k, fresh)
    hops = hop_counts(positions, config.r_max)
    out = []
    for a, view in enumerate(views):
        entries = dict(view.entries)
        entries[ids[a]] = fresh[a]
        for b, peer in enumerate(ids):
            if a == b:
                continue
            h = hops[a, b]
            if h > config.h_max:
                continue
            m = history.lookup(peer, k - int(h) + 1)
            if m is not None:
                entries[peer] = m
        out.append(NetworkView(view.owner, entries))
    return out


def empty_views(ids: Sequence[int]) -> list[NetworkView]:
    return [NetworkView(i) for i in ids]


def latest_positions(view: NetworkView) -> Mapping[int, np.ndarray]:
    return {j: m.uav_position for j, m in view.entries.items()}
