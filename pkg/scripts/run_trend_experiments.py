#!/usr/bin/env python3
"""Reproduce the three experiment families at desk scale.

Writes one CSV per family under --out (default ./results):
  scaling.csv    throughput / latency / orphan rate vs node count, per config
  orphans.csv    orphan-rate ordering across the three configurations
  malicious.csv  round time, blocks per converging block and latency vs
                 malicious fraction

Render them with the plotting frontend, e.g.:
  node frontend/dist/cli.js results/scaling.csv --spec fig5 --spec fig6 --out results
  node frontend/dist/cli.js results/malicious.csv --spec fig7 --out results
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from cdag.config import SimConfig
from cdag.harness import ExperimentPlan, export_csv, run_experiment


def scaling_plan(seeds: int) -> ExperimentPlan:
    base = SimConfig(alpha=3, k=14, tx_rate=0.10, bandwidth_bps=2.5e6,
                     duration_slots=30, collect_trace=False)
    return ExperimentPlan(
        base=base,
        axes={"config": ["desk1", "desk2", "desk3"], "n": [16, 32, 64, 128]},
        seeds=list(range(1, seeds + 1)))


def orphan_plan(seeds: int) -> ExperimentPlan:
    base = SimConfig(n=64, alpha=3, k=16, tx_rate=0.05, bandwidth_bps=12e6,
                     duration_slots=30, collect_trace=False)
    return ExperimentPlan(
        base=base,
        axes={"config": ["config1", "config2", "config3"]},
        seeds=list(range(1, seeds + 1)))


def malicious_plan(seeds: int) -> ExperimentPlan:
    base = SimConfig(n=32, alpha=3, k=16, tau=20.0, tx_rate=0.05,
                     block_size_bytes=160_000, duration_slots=30,
                     collect_trace=False)
    return ExperimentPlan(
        base=base,
        axes={"malicious_frac": [0.0, 0.10, 0.20, 0.30]},
        seeds=list(range(1, seeds + 1)))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--family", choices=["scaling", "orphans", "malicious", "all"],
                    default="all")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    families = {
        "scaling": scaling_plan,
        "orphans": orphan_plan,
        "malicious": malicious_plan,
    }
    wanted = families if args.family == "all" else {args.family: families[args.family]}
    for name, make_plan in wanted.items():
        plan = make_plan(args.seeds)
        path = os.path.join(args.out, f"{name}.csv")
        rows = []

        def flush(row, rows=rows, path=path):
            rows.append(row)
            export_csv(rows, path)

        print(f"[{name}] {len(plan.points())} points x {len(plan.seeds)} seeds",
              file=sys.stderr)
        run_experiment(plan, jobs=args.jobs,
                       progress=lambda s: print(f"[{name}] {s}", file=sys.stderr),
                       on_row=flush)
        print(f"[{name}] wrote {path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
