"""Build every reference scenario, run it, and print a one-line summary per run.

Logs, snapshots and full reports land under the output directory.
"""

import argparse
import json
from pathlib import Path

from costmap_traffic import mapio, scenarios
from costmap_traffic.sim import run_scenario


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs")
    p.add_argument("--only", nargs="*", help="scenario names to run (default: all)")
    p.add_argument("--snapshots", action="store_true", help="also write cost map snapshots")
    args = p.parse_args()

    out = Path(args.out)
    paths = scenarios.build_all(out / "scenarios")
    for name, path in paths.items():
        if args.only and name not in args.only:
            continue
        run_dir = out / name
        run_dir.mkdir(parents=True, exist_ok=True)
        rep = run_scenario(mapio.load_scenario(path), log_path=run_dir / "trajectory.jsonl",
                           snapshot_dir=run_dir / "snapshots" if args.snapshots else None)
        (run_dir / "report.json").write_text(rep.to_text())
        arrivals = {n: r["arrival_step"] for n, r in rep.robots.items()}
        print(f"{name:16s} {rep.outcome:8s} steps={rep.steps:5d} arrivals={json.dumps(arrivals)} "
              f"collisions={len(rep.collisions)} exclusion_violations="
              f"{rep.mutual_exclusion_violations} min_dist={rep.min_center_distance} "
              f"{rep.runtime_s:.1f}s")


if __name__ == "__main__":
    main()
