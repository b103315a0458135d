"""Command-line front end: ``run``, ``validate`` and ``sweep``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import ROSTER_KINDS, ConfigError, ScenarioConfig, load_config, to_dict
from .fisher import Criterion
from .harness import FLOAT_FMT, run_monte_carlo, write_outputs


def _criterion(text: str) -> Criterion:
    try:
        return Criterion.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    kw = {}
    if args.criterion is not None:
        kw["criterion"] = args.criterion
    for key in ("trials", "steps", "seed"):
        if getattr(args, key) is not None:
            kw[key] = getattr(args, key)
    est = cfg.estimator
    if getattr(args, "estimator", None) is not None:
        est = replace(est, mode=args.estimator)
    if getattr(args, "jitter", None) is not None:
        est = replace(est, jitter=args.jitter)
    if est != cfg.estimator:
        kw["estimator"] = est
    return replace(cfg, **kw) if kw else cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, type=Path, help="scenario file (YAML)")
    p.add_argument("--criterion", type=_criterion, help="a-opt or d-opt (default: from config)")
    p.add_argument("--trials", type=int, help="Monte Carlo trials")
    p.add_argument("--steps", type=int, help="steps per trial")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for the trials (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fimnav",
        description="Information-driven navigation of a UAV swarm localizing a radio source.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the Monte Carlo study for one scenario")
    _add_common(run)
    run.add_argument("--out", required=True, type=Path, help="output directory")
    run.add_argument("--estimator", choices=("oracle", "ml"))
    run.add_argument("--jitter", type=float, help="oracle jitter std in meters")

    val = sub.add_parser("validate", help="check a scenario file and print the parsed config")
    val.add_argument("--config", required=True, type=Path)

    sweep = sub.add_parser("sweep", help="run the scenario once per sensor roster")
    _add_common(sweep)
    sweep.add_argument("--roster", action="append", choices=ROSTER_KINDS,
                       help="roster to run; repeatable (default: all four)")
    sweep.add_argument("--out", type=Path, default=Path("sweep"), help="output directory")
    return parser


def _cmd_run(args) -> int:
    cfg = _overrides(load_config(args.config), args)
    t0 = time.perf_counter()
    result = run_monte_carlo(cfg, workers=args.workers)
    write_outputs(result, args.out)
    print(f"final mean PEB {FLOAT_FMT.format(result.final_mean_peb)} m, "
          f"fallback steps {result.fallback_steps}, "
          f"{time.perf_counter() - t0:.1f} s -> {args.out}")
    return 0


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    json.dump(to_dict(cfg), sys.stdout, indent=2)
    print()
    print(f"ok: {cfg.n_uavs} UAVs, {len(cfg.obstacles)} obstacles, criterion {cfg.criterion.value}")
    return 0


def _cmd_sweep(args) -> int:
    base = _overrides(load_config(args.config), args)
    kinds = args.roster or list(ROSTER_KINDS)
    curves = {}
    for kind in kinds:
        t0 = time.perf_counter()
        result = run_monte_carlo(base.with_roster(kind), workers=args.workers)
        write_outputs(result, args.out / kind)
        curves[kind] = result.mean_peb
        print(f"{kind:14s} final mean PEB {FLOAT_FMT.format(result.final_mean_peb):>12s} m  "
              f"fallback steps {result.fallback_steps:6d}  {time.perf_counter() - t0:.1f} s")
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"{k}_mean_peb_m" for k in kinds])
        for k in range(base.steps + 1):
            w.writerow([k] + [FLOAT_FMT.format(curves[kind][k]) for kind in kinds])
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "validate": _cmd_validate, "sweep": _cmd_sweep}
    try:
        return handlers[args.command](args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
