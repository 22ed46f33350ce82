"""tdolab command line: run named scenarios from a JSON config with dotted
overrides; list available scenarios.

Exit codes: 0 success, 1 configuration error, 2 simulation divergence,
3 check failure (with --check).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .core import ConfigError, SimulationDiverged
from .scenarios import (ScenarioConfig, apply_override, default_config,
                        list_scenarios, run_scenario, scenario_names)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_CHECK = 3


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tdolab",
        description="time-delay oscillator & PLL scenario simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("scenario", choices=scenario_names())
    run.add_argument("--config", help="JSON config file (defaults otherwise)")
    run.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY.PATH=VALUE",
                     help="dotted config override, e.g. pll.kappa=0.03")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--jobs", type=int, default=1,
                     help="run this many independent seeds in parallel")
    run.add_argument("--check", action="store_true",
                     help="verify run metrics against expected behaviours; "
                          "exit 3 on failure")

    sub.add_parser("list", help="list built-in scenarios")
    return ap


def _load_config(args) -> ScenarioConfig:
    if args.config:
        base = ScenarioConfig.from_json(args.config)
        if base.scenario != args.scenario:
            base = replace(base, scenario=args.scenario)
    else:
        base = default_config(args.scenario)
    if args.overrides:
        d = base.as_dict()
        for ov in args.overrides:
            apply_override(d, ov)
        base = ScenarioConfig.from_dict(d)
    if args.out:
        base = replace(base, out_dir=args.out)
    if args.seed is not None:
        base = replace(base, seed=args.seed)
    return base


def _run_one(cfg: ScenarioConfig, check: bool) -> dict:
    return run_scenario(cfg, check=check)


def _cmd_run(args) -> int:
    try:
        cfg = _load_config(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    jobs = max(1, args.jobs)
    try:
        if jobs == 1:
            manifests = [_run_one(cfg, args.check)]
        else:
            cfgs = [replace(cfg, seed=cfg.seed + j,
                            out_dir=str(Path(cfg.out_dir) / f"seed-{cfg.seed + j}"))
                    for j in range(jobs)]
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                manifests = list(pool.map(_run_one, cfgs,
                                          [args.check] * jobs))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationDiverged as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    for man in manifests:
        out = Path(man["config"]["out_dir"])
        print(f"{man['scenario']}: wrote {out / 'manifest.json'}")
        for key in ("settled_frequency_hz", "settled_amplitude"):
            if key in man["results"]:
                print(f"  {key} = {man['results'][key]:.6g}")
        if "lock_report" in man["results"]:
            rep = man["results"]["lock_report"]
            print(f"  lock_time = {rep['lock_time']}  "
                  f"loss_time = {rep['loss_time']}")
        if "ridge_fit" in man["results"]:
            print(f"  ridge_fit = {json.dumps(man['results']['ridge_fit'])}")
        if args.check:
            for c in man["checks"]:
                mark = "PASS" if c["passed"] else "FAIL"
                detail = f" ({c['detail']})" if c["detail"] else ""
                print(f"  [{mark}] {c['name']}{detail}")

    if args.check and not all(m["checks_passed"] for m in manifests):
        return EXIT_CHECK
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list":
        print(list_scenarios())
        return EXIT_OK
    return _cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
