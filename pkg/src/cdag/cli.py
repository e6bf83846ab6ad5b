"""Command line driver: run, sweep, export, replay.

Every SimConfig key is exposed as a flag; CDAG_<KEY> environment
variables override defaults before flags are applied.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace

from .config import (CONFIG_PRESETS, MaliciousSpec, SimConfig,
                     apply_env_overrides, malicious_fraction_spec)
from .harness import (ExperimentPlan, export_csv, export_ledger, replay,
                      run_experiment, write_run_dir)
from .metrics import compute
from .simulation import run as run_sim

_FLOAT_KEYS = {"tau", "bandwidth_bps", "tx_rate", "double_spend_rate",
               "skew_bound_ms", "drift_ms_per_slot", "pairing_deadline_frac",
               "validator_wait_frac", "proposal_wait_frac",
               "keeper_query_wait_frac", "keeper_vote_delay_frac",
               "probe_retry_s"}
_SKIP_KEYS = {"malicious", "latency_ms_range", "collect_trace", "pad_blocks"}


def _add_config_flags(ap: argparse.ArgumentParser) -> None:
    for f in fields(SimConfig):
        if f.name in _SKIP_KEYS:
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.name in _FLOAT_KEYS:
            ap.add_argument(flag, type=float, default=None)
        else:
            ap.add_argument(flag, type=int, default=None)
    ap.add_argument("--latency-ms", nargs=2, type=float, metavar=("LO", "HI"),
                    default=None)
    ap.add_argument("--malicious-frac", type=float, default=None,
                    help="fraction of duty-dropping nodes")
    ap.add_argument("--malicious-json", type=str, default=None,
                    help="JSON list of adversary specs")
    ap.add_argument("--config", choices=sorted(CONFIG_PRESETS), default=None,
                    help="block size / slot length preset")
    ap.add_argument("--config-file", type=str, default=None,
                    help="JSON file of SimConfig keys; flags override it")
    ap.add_argument("--no-trace", action="store_true")


def _config_from_args(args) -> tuple[SimConfig, str]:
    if args.config_file:
        from .config import load_config
        cfg = apply_env_overrides(load_config(args.config_file))
    else:
        cfg = apply_env_overrides(SimConfig())
    label = "custom"
    if args.config:
        cfg = cfg.with_preset(args.config)
        label = args.config
    updates = {}
    for f in fields(SimConfig):
        if f.name in _SKIP_KEYS:
            continue
        val = getattr(args, f.name, None)
        if val is not None:
            updates[f.name] = val
    if args.latency_ms is not None:
        updates["latency_ms_range"] = (args.latency_ms[0], args.latency_ms[1])
    specs = []
    if args.malicious_frac is not None:
        specs.append(malicious_fraction_spec(args.malicious_frac))
    if args.malicious_json is not None:
        specs.extend(MaliciousSpec.from_dict(d)
                     for d in json.loads(args.malicious_json))
    if specs:
        updates["malicious"] = tuple(specs)
    if args.no_trace:
        updates["collect_trace"] = False
    return replace(cfg, **updates), label


def _cmd_run(args) -> int:
    cfg, label = _config_from_args(args)
    cfg.check()
    sim = run_sim(cfg)
    report = compute(sim, label)
    reports = [report]
    if args.out:
        write_run_dir(args.out, cfg, sim, reports, trace=args.trace,
                      config_label=label)
        if args.export_ledger:
            export_ledger(sim, args.export_ledger,
                          f"{args.out}/ledger.{args.export_ledger}")
        print(f"wrote {args.out}/metrics.csv", file=sys.stderr)
    else:
        sys.stdout.write(export_csv(reports))
    return 0


def _cmd_sweep(args) -> int:
    if args.plan:
        plan = ExperimentPlan.load(args.plan)
        if args.seeds:
            plan.seeds = list(range(1, args.seeds + 1))
    else:
        base, _ = _config_from_args(args)
        axes = {}
        if args.sweep_n:
            axes["n"] = args.sweep_n
        if args.sweep_config:
            axes["config"] = args.sweep_config
        if args.sweep_malicious:
            axes["malicious_frac"] = args.sweep_malicious
        plan = ExperimentPlan(base=base, axes=axes,
                              seeds=list(range(1, (args.seeds or 1) + 1)),
                              min_slots=base.duration_slots)
    rows = []
    out_path = f"{args.out}/metrics.csv" if args.out else None
    if args.out:
        import os
        os.makedirs(args.out, exist_ok=True)
        plan.save(f"{args.out}/plan.json")

    def flush(row) -> None:
        rows.append(row)
        if out_path:
            export_csv(rows, out_path)

    run_experiment(plan, jobs=args.jobs,
                   progress=lambda s: print(s, file=sys.stderr), on_row=flush)
    if not out_path:
        sys.stdout.write(export_csv(rows))
    return 0


def _cmd_export(args) -> int:
    from .metrics import CSV_COLUMNS
    with open(f"{args.run_dir}/metrics.json") as fh:
        rows = json.load(fh)
    if args.format == "csv":
        import csv as _csv
        import io
        buf = io.StringIO()
        w = _csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([row[c] for c in CSV_COLUMNS])
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(json.dumps(rows, indent=2, sort_keys=True))
    return 0


def _cmd_replay(args) -> int:
    ok, original, fresh = replay(args.run_dir)
    if ok:
        print("replay identical", file=sys.stderr)
        return 0
    sys.stderr.write("replay DIFFERS\n--- stored ---\n")
    sys.stderr.write(original)
    sys.stderr.write("--- replay ---\n")
    sys.stderr.write(fresh)
    return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cdag",
        description="CDAG ledger and tournament-election network simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one seeded run")
    _add_config_flags(p_run)
    p_run.add_argument("--out", type=str, default=None)
    p_run.add_argument("--trace", action="store_true",
                       help="write trace.ndjson next to the metrics")
    p_run.add_argument("--export-ledger", choices=["json", "dot"], default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run an experiment plan")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--plan", type=str, default=None)
    p_sweep.add_argument("--out", type=str, default=None)
    p_sweep.add_argument("--seeds", type=int, default=None)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--sweep-n", nargs="+", type=int, default=None)
    p_sweep.add_argument("--sweep-config", nargs="+", type=str, default=None)
    p_sweep.add_argument("--sweep-malicious", nargs="+", type=float, default=None)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_export = sub.add_parser("export", help="re-export a stored run")
    p_export.add_argument("run_dir")
    p_export.add_argument("--format", choices=["csv", "json"], default="csv")
    p_export.set_defaults(fn=_cmd_export)

    p_replay = sub.add_parser("replay", help="re-run a stored run and diff the CSV")
    p_replay.add_argument("run_dir")
    p_replay.set_defaults(fn=_cmd_replay)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
