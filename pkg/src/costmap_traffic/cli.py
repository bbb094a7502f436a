"""Command-line entry point: run, validate and inspect scenarios."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from . import mapio
from .errors import ConfigError, ConsistencyError, FormatError
from .grid import Occupancy
from .sim import run_scenario

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

# errors that mean "the inputs are wrong" rather than "the run went badly"
INPUT_ERRORS = (ConfigError, FormatError, ConsistencyError, FileNotFoundError, IsADirectoryError)


def _load(path):
    scenario = mapio.load_scenario(path)
    # touch every referenced file so bad inputs fail before step 0
    mapio.load_occupancy_map(scenario.static_map.image, scenario.static_map.meta)
    if scenario.prohibition_mask:
        mapio.load_mask(scenario.prohibition_mask.image, scenario.prohibition_mask.meta)
    if scenario.lane_mask:
        mapio.load_lane_mask(scenario.lane_mask.image, scenario.lane_mask.meta)
    if scenario.regions:
        mapio.load_regions(scenario.regions)
    return scenario


def cmd_run(args) -> int:
    scenario = _load(args.scenario)
    if args.seed is not None:
        scenario = scenario.replace(sim=dataclasses.replace(scenario.sim, seed=args.seed))
    report = run_scenario(scenario, log_path=args.log, snapshot_dir=args.snapshots,
                          max_steps=args.steps)
    print(report.to_text())
    return EXIT_OK if report.success else EXIT_FAILED


def cmd_validate(args) -> int:
    scenario = _load(args.scenario)
    print(f"ok: {scenario.name} ({len(scenario.robots)} robots)")
    return EXIT_OK


def cmd_inspect_map(args) -> int:
    occ = mapio.load_occupancy_map(args.image, args.meta)
    m = occ.meta
    counts = {k.name.lower(): int(np.count_nonzero(occ.cells == k)) for k in Occupancy}
    print(json.dumps({"width": m.width, "height": m.height, "resolution": m.resolution,
                      "origin": [m.origin_x, m.origin_y], "cells": counts}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="costmap-traffic", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and print the report")
    run.add_argument("scenario")
    run.add_argument("--snapshots", metavar="DIR")
    run.add_argument("--log", metavar="FILE")
    run.add_argument("--seed", type=int)
    run.add_argument("--steps", type=int)
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="load and check a scenario without running it")
    val.add_argument("scenario")
    val.set_defaults(func=cmd_validate)

    insp = sub.add_parser("inspect-map", help="summarize an occupancy map")
    insp.add_argument("image")
    insp.add_argument("meta")
    insp.set_defaults(func=cmd_inspect_map)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
