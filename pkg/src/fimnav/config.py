"""Scenario configuration: loading, validation and the built-in scenes.

Config files are YAML (JSON also parses). Distances are meters and angles are
degrees in the file; angles are converted to radians on load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .control import ControlConfig
from .fisher import Criterion
from .geometry import ObstacleBox
from .kinematics import KinematicLimits
from .network import NetworkConfig
from .sensing import BEARING, JOINT, RANGING, ChannelParams, SensorRole

ROSTER_KINDS = ("ranging", "bearing", "joint", "heterogeneous")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Ellipse:
    """Initial formation: an ellipse in the XZ-plane."""

    center: tuple[float, float, float] = (0.0, 150.0, 8.0)
    r_x: float = 20.0
    r_z: float = 5.0


@dataclass(frozen=True)
class SourcePath:
    """Timed waypoints ``(step, position)`` for a moving source, optional perimeter box."""

    waypoints: tuple[tuple[float, tuple[float, float, float]], ...]
    perimeter: Optional[ObstacleBox] = None


@dataclass(frozen=True)
class EstimatorConfig:
    mode: str = "oracle"
    jitter: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    n_uavs: int = 10
    ranging: tuple[int, ...] = (1, 4, 7, 10)
    bearing: tuple[int, ...] = (2, 5, 8)
    joint: tuple[int, ...] = (3, 6, 9)
    source: tuple[float, float, float] = (0.0, 0.0, 10.0)
    obstacles: tuple[ObstacleBox, ...] = ()
    channel: ChannelParams = field(default_factory=ChannelParams)
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    criterion: Criterion = Criterion.A
    steps: int = 550
    trials: int = 100
    seed: int = 0
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    source_path: Optional[SourcePath] = None
    initial_ellipse: Ellipse = field(default_factory=Ellipse)

    def __post_init__(self):
        validate(self)

    def role_of(self, uav_id: int) -> SensorRole:
        if uav_id in self.joint:
            return JOINT
        if uav_id in self.bearing:
            return BEARING
        if uav_id in self.ranging:
            return RANGING
        raise KeyError(uav_id)

    @property
    def ids(self) -> list[int]:
        return list(range(1, self.n_uavs + 1))

    def with_roster(self, kind: str) -> "ScenarioConfig":
        """Same scenario with every UAV given the same role (or the configured mix)."""
        if kind == "heterogeneous":
            return self
        everyone = tuple(self.ids)
        rosters = {"ranging": (everyone, (), ()), "bearing": ((), everyone, ()),
                   "joint": ((), (), everyone)}
        if kind not in rosters:
            raise ConfigError(f"unknown roster {kind!r}; expected one of {ROSTER_KINDS}")
        r, b, j = rosters[kind]
        return replace(self, ranging=r, bearing=b, joint=j)


def validate(cfg: ScenarioConfig) -> None:
    if cfg.n_uavs < 1:
        raise ConfigError("n_uavs must be at least 1")
    sets = [set(cfg.ranging), set(cfg.bearing), set(cfg.joint)]
    if sum(len(s) for s in sets) != len(set().union(*sets)):
        raise ConfigError("rosters must be disjoint")
    if set().union(*sets) != set(range(1, cfg.n_uavs + 1)):
        raise ConfigError(f"rosters must cover UAV ids 1..{cfg.n_uavs} exactly")
    if cfg.steps < 1:
        raise ConfigError("steps must be at least 1")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if cfg.trials < 1:
        raise ConfigError("trials must be at least 1")
    if cfg.estimator.mode not in ("oracle", "ml"):
        raise ConfigError(f"unknown estimator mode {cfg.estimator.mode!r}")
    if cfg.estimator.jitter < 0:
        raise ConfigError("estimator jitter must be non-negative")
    if not all(math.isfinite(v) for v in cfg.source):
        raise ConfigError("source position must be finite")
    if cfg.source_path is not None and not cfg.source_path.waypoints:
        raise ConfigError("source path needs at least one waypoint")


# -- dict <-> config -------------------------------------------------------

_KNOWN_KEYS = {
    "n_uavs", "rosters", "source", "obstacles", "channel", "limits", "network",
    "control", "criterion", "steps", "trials", "seed", "estimator", "source_path",
    "initial_ellipse",
}


def _vec(value, name) -> tuple[float, float, float]:
    try:
        v = tuple(float(x) for x in value)
    except TypeError as exc:
        raise ConfigError(f"{name}: expected a list of 3 numbers") from exc
    if len(v) != 3:
        raise ConfigError(f"{name}: expected 3 components, got {len(v)}")
    return v


def _section(raw: dict, key: str, allowed: set[str]) -> dict:
    sec = raw.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: expected a mapping")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"{key}: unknown keys {sorted(unknown)}")
    return sec


def from_dict(raw: dict[str, Any]) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kw: dict[str, Any] = {}
    for key in ("n_uavs", "steps", "trials", "seed"):
        if key in raw:
            kw[key] = int(raw[key])
    if "rosters" in raw:
        rost = _section(raw, "rosters", {"ranging", "bearing", "joint"})
        for key in ("ranging", "bearing", "joint"):
            kw[key] = tuple(int(i) for i in (rost.get(key) or ()))
    if "source" in raw:
        kw["source"] = _vec(raw["source"], "source")
    if "obstacles" in raw:
        boxes = []
        for i, pair in enumerate(raw["obstacles"] or ()):
            if len(pair) != 2:
                raise ConfigError(f"obstacles[{i}]: expected a pair of corners")
            boxes.append(ObstacleBox.from_corners(_vec(pair[0], f"obstacles[{i}]"),
                                                  _vec(pair[1], f"obstacles[{i}]")))
        kw["obstacles"] = tuple(boxes)
    try:
        ch = _section(raw, "channel", {"gamma", "sigma_ratio_los", "sigma_ratio_nlos",
                                       "sigma_bearing_deg"})
        if ch:
            d = ChannelParams()
            kw["channel"] = ChannelParams(
                gamma=float(ch.get("gamma", d.gamma)),
                sigma_ratio_los=float(ch.get("sigma_ratio_los", d.sigma_ratio_los)),
                sigma_ratio_nlos=float(ch.get("sigma_ratio_nlos", d.sigma_ratio_nlos)),
                sigma_bearing=math.radians(float(ch.get("sigma_bearing_deg",
                                                        math.degrees(d.sigma_bearing)))))
        lim = _section(raw, "limits", {"v_min", "v_max", "phi_max_deg", "theta_max_deg",
                                       "z_min", "z_max", "dt"})
        if lim:
            d = KinematicLimits()
            kw["limits"] = KinematicLimits(
                v_min=float(lim.get("v_min", d.v_min)),
                v_max=float(lim.get("v_max", d.v_max)),
                phi_max=math.radians(float(lim.get("phi_max_deg", math.degrees(d.phi_max)))),
                theta_max=math.radians(float(lim.get("theta_max_deg",
                                                     math.degrees(d.theta_max)))),
                z_min=float(lim.get("z_min", d.z_min)),
                z_max=float(lim.get("z_max", d.z_max)),
                dt=float(lim.get("dt", d.dt)))
        net = _section(raw, "network", {"r_max", "h_max"})
        if net:
            kw["network"] = NetworkConfig(float(net.get("r_max", 100.0)), int(net.get("h_max", 1)))
        ctl = _section(raw, "control", {"xi", "fd_step", "d_star_uav", "d_star_source",
                                        "d_star_obstacle"})
        if ctl:
            kw["control"] = replace(ControlConfig(), **{k: float(v) for k, v in ctl.items()})
        est = _section(raw, "estimator", {"mode", "jitter"})
        if est:
            kw["estimator"] = EstimatorConfig(str(est.get("mode", "oracle")),
                                              float(est.get("jitter", 0.0)))
        if "criterion" in raw:
            kw["criterion"] = Criterion.parse(raw["criterion"])
        ell = _section(raw, "initial_ellipse", {"center", "r_x", "r_z"})
        if ell:
            d = Ellipse()
            kw["initial_ellipse"] = Ellipse(
                _vec(ell.get("center", d.center), "initial_ellipse.center"),
                float(ell.get("r_x", d.r_x)), float(ell.get("r_z", d.r_z)))
        sp = raw.get("source_path")
        if sp:
            sp = _section(raw, "source_path", {"waypoints", "perimeter"})
            wps = tuple((float(w["step"]), _vec(w["position"], "source_path.waypoints"))
                        for w in sp.get("waypoints") or ())
            if any(b[0] <= a[0] for a, b in zip(wps, wps[1:])):
                raise ConfigError("source_path waypoint steps must increase")
            per = sp.get("perimeter")
            perimeter = (ObstacleBox.from_corners(_vec(per[0], "perimeter"),
                                                  _vec(per[1], "perimeter"))
                         if per else None)
            kw["source_path"] = SourcePath(wps, perimeter)
        return ScenarioConfig(**kw)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    """Inverse of :func:`from_dict` (angles back in degrees)."""
    out: dict[str, Any] = {
        "n_uavs": cfg.n_uavs,
        "rosters": {"ranging": list(cfg.ranging), "bearing": list(cfg.bearing),
                    "joint": list(cfg.joint)},
        "source": list(cfg.source),
        "obstacles": [[list(b.lo), list(b.hi)] for b in cfg.obstacles],
        "channel": {"gamma": cfg.channel.gamma,
                    "sigma_ratio_los": cfg.channel.sigma_ratio_los,
                    "sigma_ratio_nlos": cfg.channel.sigma_ratio_nlos,
                    "sigma_bearing_deg": math.degrees(cfg.channel.sigma_bearing)},
        "limits": {"v_min": cfg.limits.v_min, "v_max": cfg.limits.v_max,
                   "phi_max_deg": math.degrees(cfg.limits.phi_max),
                   "theta_max_deg": math.degrees(cfg.limits.theta_max),
                   "z_min": cfg.limits.z_min, "z_max": cfg.limits.z_max, "dt": cfg.limits.dt},
        "network": {"r_max": cfg.network.r_max, "h_max": cfg.network.h_max},
        "control": {"xi": cfg.control.xi, "fd_step": cfg.control.fd_step,
                    "d_star_uav": cfg.control.d_star_uav,
                    "d_star_source": cfg.control.d_star_source,
                    "d_star_obstacle": cfg.control.d_star_obstacle},
        "criterion": cfg.criterion.value,
        "steps": cfg.steps,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "estimator": {"mode": cfg.estimator.mode, "jitter": cfg.estimator.jitter},
        "initial_ellipse": {"center": list(cfg.initial_ellipse.center),
                            "r_x": cfg.initial_ellipse.r_x, "r_z": cfg.initial_ellipse.r_z},
    }
    if cfg.source_path is not None:
        sp = {"waypoints": [{"step": s, "position": list(p)}
                            for s, p in cfg.source_path.waypoints]}
        if cfg.source_path.perimeter is not None:
            sp["perimeter"] = [list(cfg.source_path.perimeter.lo),
                               list(cfg.source_path.perimeter.hi)]
        out["source_path"] = sp
    return out


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(raw or {})


def builtin_scenario(name: str = "nlos") -> ScenarioConfig:
    """Load one of the scenario files shipped with the package (``nlos`` or ``los``)."""
    ref = resources.files("fimnav") / "scenarios" / f"{name}.yaml"
    with resources.as_file(ref) as path:
        return load_config(path)

