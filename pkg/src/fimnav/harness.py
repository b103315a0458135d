"""Per-trial simulation loop, Monte Carlo aggregation and result files.

Each step runs synchronously for the whole swarm: every UAV senses, the
measurements are disseminated, every UAV updates its source estimate, the
metrics are recorded, then every UAV computes its control from the same
snapshot and all move at once.

Random numbers come from one generator per (trial, UAV), seeded with
``SeedSequence([seed, trial, uav_id])``. A trial's outcome therefore does not
depend on how many trials run or in which process.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ScenarioConfig, to_dict
from .control import compute_control
from .estimator import ml_estimate, oracle_estimate
from .fisher import cost_values, fim_terms, peb_values
from .geometry import closest_obstacle, relative_geometry
from .kinematics import UavState, apply_transition
from .network import MeasurementHistory, disseminate, empty_views
from .sensing import sense

log = logging.getLogger(__name__)

FLOAT_FMT = "{:.9g}"


def trial_rng(seed: int, trial: int, uav_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial, uav_id]))


def initial_positions(cfg: ScenarioConfig) -> np.ndarray:
    """UAVs evenly spaced on the XZ-plane ellipse, altitude clipped to the flight box."""
    n = cfg.n_uavs
    ell = cfg.initial_ellipse
    ang = 2.0 * np.pi * np.arange(n) / n
    pos = np.empty((n, 3))
    pos[:, 0] = ell.center[0] + ell.r_x * np.cos(ang)
    pos[:, 1] = ell.center[1]
    pos[:, 2] = ell.center[2] + ell.r_z * np.sin(ang)
    pos[:, 2] = np.clip(pos[:, 2], cfg.limits.z_min, cfg.limits.z_max)
    return pos


def move_source(cfg: ScenarioConfig, k: float) -> np.ndarray:
    """True source position at step ``k``: static, or interpolated along timed waypoints."""
    path = cfg.source_path
    if path is None:
        return np.array(cfg.source, dtype=float)
    steps = np.array([s for s, _ in path.waypoints])
    pts = np.array([p for _, p in path.waypoints])
    p = np.array([np.interp(k, steps, pts[:, a]) for a in range(3)])
    if path.perimeter is not None:
        p = np.clip(p, path.perimeter.lo, path.perimeter.hi)
    return p


@dataclass
class TrialResult:
    trial: int
    ids: list[int]
    positions: np.ndarray          # (K+1, N, 3)
    peb: np.ndarray                # (K+1, N), inf where singular
    cost: np.ndarray               # (K+1, N), nan where singular
    fallback: np.ndarray           # (K+1, N) bool, control at step k was the random fallback
    min_uav_distance: np.ndarray   # (K+1,)
    min_obstacle_distance: np.ndarray  # (K+1,), inf without obstacles
    infeasible_clamps: int = 0
    violations: dict[str, int] = field(default_factory=dict)

    @property
    def fallback_steps(self) -> int:
        return int(self.fallback.sum())

    @property
    def steps(self) -> int:
        return self.positions.shape[0] - 1


def _min_pair_distance(pos: np.ndarray) -> float:
    if len(pos) < 2:
        return math.inf
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def run_trial(cfg: ScenarioConfig, trial_index: int, steps: Optional[int] = None) -> TrialResult:
    K = cfg.steps if steps is None else steps
    ids = cfg.ids
    n = len(ids)
    rngs = [trial_rng(cfg.seed, trial_index, uid) for uid in ids]
    pos0 = initial_positions(cfg)
    src0 = move_source(cfg, 0)
    states = []
    for i, uid in enumerate(ids):
        _, direction = relative_geometry(pos0[i], src0)
        states.append(UavState(uid, pos0[i].copy(), direction.azimuth, 0.0, cfg.role_of(uid)))

    positions = np.empty((K + 1, n, 3))
    peb = np.empty((K + 1, n))
    cost = np.empty((K + 1, n))
    fallback = np.zeros((K + 1, n), dtype=bool)
    min_uav = np.empty(K + 1)
    min_obs = np.empty(K + 1)
    violations = {"uav": 0, "source": 0, "obstacle": 0}
    infeasible = 0

    history = MeasurementHistory(cfg.network.h_max)
    views = empty_views(ids)
    estimates: list[Optional[np.ndarray]] = [None] * n
    ctl = cfg.control
    est_cfg = cfg.estimator

    # per UAV: information of the peer entries at its source estimate, reused by the controller
    others_fim: list[Optional[np.ndarray]] = [None] * n

    def observe(k: int):
        nonlocal views
        src = move_source(cfg, k)
        fresh = [sense(s, src, cfg.obstacles, cfg.channel, rngs[i], k)
                 for i, s in enumerate(states)]
        cur = np.array([s.position for s in states])
        views = disseminate(k, fresh, cur, cfg.network, views, history)
        for i in range(n):
            if est_cfg.mode == "oracle":
                estimates[i] = oracle_estimate(src, est_cfg.jitter, rngs[i]).position
            else:
                est = ml_estimate(views[i], cfg.channel, init=estimates[i])
                if est.valid:
                    estimates[i] = est.position

        # views share measurement objects: evaluate each distinct entry once
        index: dict[int, int] = {}
        uniq = []
        rows = []
        for i, view in enumerate(views):
            row = []
            for j in sorted(view.entries):
                m = view.entries[j]
                key = id(m)
                if key not in index:
                    index[key] = len(uniq)
                    uniq.append(m)
                row.append(index[key])
            rows.append(row)
        arrs = (np.array([m.uav_position for m in uniq]),
                np.array([m.kappa for m in uniq], dtype=float),
                np.array([m.beta for m in uniq], dtype=float),
                np.array([m.los for m in uniq], dtype=float))
        terms = fim_terms(*arrs, src, cfg.channel)
        own_idx = [index[id(views[i].entries[ids[i]])] for i in range(n)]
        J_true = np.stack([terms[r].sum(axis=0) for r in rows])
        peb[k] = peb_values(J_true)
        for i in range(n):
            if estimates[i] is None:
                cost[k, i] = np.nan
                others_fim[i] = None
                continue
            if np.array_equal(estimates[i], src):
                J_est, t_est = J_true[i], terms
            else:
                t_est = fim_terms(*arrs, estimates[i], cfg.channel)
                J_est = t_est[rows[i]].sum(axis=0)
            cost[k, i] = cost_values(J_est, cfg.criterion)
            others_fim[i] = t_est[[r for r in rows[i] if r != own_idx[i]]].sum(axis=0)

        positions[k] = cur
        min_uav[k] = _min_pair_distance(cur)
        obs_d = [closest_obstacle(p, cfg.obstacles)[1] for p in cur]
        min_obs[k] = min(obs_d) if obs_d else math.inf
        for i in range(n):
            d_src = float(np.linalg.norm(cur[i] - src))
            violations["source"] += d_src < ctl.d_star_source
            violations["obstacle"] += obs_d[i] < ctl.d_star_obstacle
        if n > 1:
            diff = cur[:, None, :] - cur[None, :, :]
            d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            violations["uav"] += int(np.sum(np.triu(d < ctl.d_star_uav, 1)))

    observe(0)
    for k in range(1, K + 1):
        decisions = [
            compute_control(states[i], views[i], estimates[i], cfg.obstacles, cfg.channel,
                            cfg.limits, ctl, cfg.criterion, rngs[i], others_fim=others_fim[i])
            for i in range(n)
        ]
        for i, dec in enumerate(decisions):
            fallback[k, i] = dec.fallback
            infeasible += dec.control.infeasible
        states = [apply_transition(s, dec.control) for s, dec in zip(states, decisions)]
        observe(k)

    return TrialResult(trial_index, ids, positions, peb, cost, fallback, min_uav, min_obs,
                       infeasible, violations)


@dataclass
class MonteCarloResult:
    config: ScenarioConfig
    mean_peb: np.ndarray            # (K+1,), nan where every entry is singular
    singular_fraction: np.ndarray   # (K+1,)
    trials: list[TrialResult]

    @property
    def final_mean_peb(self) -> float:
        return float(self.mean_peb[-1])

    @property
    def fallback_steps(self) -> int:
        return sum(t.fallback_steps for t in self.trials)

    def summary(self) -> dict:
        viol = {"uav": 0, "source": 0, "obstacle": 0}
        for t in self.trials:
            for key, v in t.violations.items():
                viol[key] += v
        finite = self.mean_peb[np.isfinite(self.mean_peb)]
        return {
            "criterion": self.config.criterion.value,
            "n_uavs": self.config.n_uavs,
            "steps": int(len(self.mean_peb) - 1),
            "trials": len(self.trials),
            "seed": self.config.seed,
            "initial_mean_peb_m": _num(self.mean_peb[0]),
            "final_mean_peb_m": _num(self.mean_peb[-1]),
            "min_mean_peb_m": _num(finite.min()) if len(finite) else None,
            "final_singular_fraction": _num(self.singular_fraction[-1]),
            "fallback_steps": self.fallback_steps,
            "fallback_steps_per_trial": [t.fallback_steps for t in self.trials],
            "infeasible_clamps": sum(t.infeasible_clamps for t in self.trials),
            "constraint_violations": viol,
            "min_inter_uav_distance_m": _num(min(float(t.min_uav_distance.min())
                                                 for t in self.trials)),
            "min_obstacle_distance_m": _num(min(float(t.min_obstacle_distance.min())
                                                for t in self.trials)),
        }


def _num(x) -> Optional[float]:
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(FLOAT_FMT.format(x))


def _round_floats(obj):
    """Floats in a nested structure cut to the output precision (degree round trips
    otherwise leak ``50.00000000000001``)."""
    if isinstance(obj, float):
        return float(FLOAT_FMT.format(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def aggregate(cfg: ScenarioConfig, trials: Sequence[TrialResult]) -> MonteCarloResult:
    """Per-step mean PEB over all UAVs of all trials, skipping singular entries."""
    stacked = np.stack([t.peb for t in trials], axis=0)   # (M, K+1, N)
    finite = np.isfinite(stacked)
    count = finite.sum(axis=(0, 2))
    total = np.where(finite, stacked, 0.0).sum(axis=(0, 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    singular = 1.0 - count / (stacked.shape[0] * stacked.shape[2])
    return MonteCarloResult(cfg, mean, singular, list(trials))


def _run_one(args):
    cfg, idx = args
    return run_trial(cfg, idx)


def run_monte_carlo(cfg: ScenarioConfig, workers: int = 1) -> MonteCarloResult:
    indices = list(range(cfg.trials))
    log.info("running %d trials of %d steps (%d workers)", cfg.trials, cfg.steps, workers)
    if workers > 1 and len(indices) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(_run_one, [(cfg, i) for i in indices]))
    else:
        trials = [run_trial(cfg, i) for i in indices]
    return aggregate(cfg, trials)


# -- files -----------------------------------------------------------------

def _fmt(x) -> str:
    return FLOAT_FMT.format(float(x))


def write_peb_csv(result: MonteCarloResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mean_peb_m", "singular_fraction"])
        for k, (m, s) in enumerate(zip(result.mean_peb, result.singular_fraction)):
            w.writerow([k, _fmt(m), _fmt(s)])


def write_trajectories_csv(trials: Sequence[TrialResult], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "step", "uav_id", "x", "y", "z"])
        for t in trials:
            for k in range(t.positions.shape[0]):
                for i, uid in enumerate(t.ids):
                    x, y, z = t.positions[k, i]
                    w.writerow([t.trial, k, uid, _fmt(x), _fmt(y), _fmt(z)])


def read_trajectories_csv(path: Path) -> dict[int, np.ndarray]:
    """Parse ``trajectories.csv`` back into ``{trial: positions (K+1, N, 3)}``."""
    rows: dict[int, dict[tuple[int, int], tuple[float, float, float]]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(int(r["trial"]), {})[(int(r["step"]), int(r["uav_id"]))] = (
                float(r["x"]), float(r["y"]), float(r["z"]))
    out = {}
    for trial, cells in rows.items():
        steps = sorted({k for k, _ in cells})
        uavs = sorted({u for _, u in cells})
        arr = np.empty((len(steps), len(uavs), 3))
        for (k, u), xyz in cells.items():
            arr[steps.index(k), uavs.index(u)] = xyz
        out[trial] = arr
    return out


def read_peb_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return (np.array([float(r["mean_peb_m"]) for r in rows]),
            np.array([float(r["singular_fraction"]) for r in rows]))


def write_outputs(result: MonteCarloResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_peb_csv(result, out / "peb.csv")
    write_trajectories_csv(result.trials, out / "trajectories.csv")
    summary = result.summary()
    summary["config"] = _round_floats(to_dict(result.config))
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out
