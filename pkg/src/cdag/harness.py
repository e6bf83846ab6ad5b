"""Experiment driver: sweeps, seeded runs, CSV/JSON artifacts, replay.

The CSV column list is the contract with downstream plotting; order and
formatting are byte-stable so identical (config, seed) pairs always
reproduce identical files.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

from .config import SimConfig
from .errors import InvalidParameter
from .ledger import export_ledger_dot, export_ledger_json
from .metrics import CSV_COLUMNS, MetricsReport, compute
from .simulation import Simulation, run

MEAN_SEED = -1


@dataclass(slots=True)
class ExperimentPlan:
    """A base config, sweep axes and the seeds run at every point."""

    base: SimConfig
    axes: dict[str, list] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [1])
    min_slots: int = 30

    def points(self) -> list[dict]:
        """Cartesian product of the sweep axes, in axis declaration order."""
        if not self.axes:
            return [{}]
        names = list(self.axes)
        out = []
        for combo in itertools.product(*(self.axes[k] for k in names)):
            out.append(dict(zip(names, combo)))
        return out

    def config_for(self, point: dict, seed: int) -> tuple[SimConfig, str]:
        cfg = self.base
        label = "custom"
        for key, value in point.items():
            if key == "config":
                cfg = cfg.with_preset(value)
                label = value
            elif key == "malicious_frac":
                from .config import malicious_fraction_spec
                cfg = replace(cfg, malicious=(malicious_fraction_spec(value),))
            else:
                cfg = replace(cfg, **{key: value})
        if cfg.duration_slots < self.min_slots:
            cfg = replace(cfg, duration_slots=self.min_slots)
        return replace(cfg, seed=seed), label

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "axes": self.axes,
                "seeds": self.seeds, "min_slots": self.min_slots}

    @staticmethod
    def from_dict(d: dict) -> "ExperimentPlan":
        return ExperimentPlan(
            base=SimConfig.from_dict(d["base"]),
            axes={k: list(v) for k, v in d.get("axes", {}).items()},
            seeds=list(d.get("seeds", [1])),
            min_slots=d.get("min_slots", 30),
        )

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @staticmethod
    def load(path: str) -> "ExperimentPlan":
        with open(path) as fh:
            return ExperimentPlan.from_dict(json.load(fh))


def _run_point(args) -> MetricsReport:
    cfg, label = args
    sim = run(cfg)
    return compute(sim, label)


def _mean_report(rows: list[MetricsReport]) -> MetricsReport:
    import math

    def mean(vals):
        vals = [v for v in vals if not (isinstance(v, float) and math.isnan(v))]
        return sum(vals) / len(vals) if vals else float("nan")

    first = rows[0]
    return replace(
        first,
        seed=MEAN_SEED,
        throughput_tps=mean([r.throughput_tps for r in rows]),
        latency_min_s=mean([r.latency_min_s for r in rows]),
        latency_avg_s=mean([r.latency_avg_s for r in rows]),
        latency_max_s=mean([r.latency_max_s for r in rows]),
        orphan_rate=mean([r.orphan_rate for r in rows]),
        avg_round_time_s=mean([r.avg_round_time_s for r in rows]),
        avg_blocks_per_cblock=mean([r.avg_blocks_per_cblock for r in rows]),
        confirmed_txs=sum(r.confirmed_txs for r in rows),
        qualified_mean=mean([r.qualified_mean for r in rows]),
    )


def run_experiment(plan: ExperimentPlan, jobs: int = 1,
                   progress: Optional[Callable[[str], None]] = None,
                   on_row: Optional[Callable[[MetricsReport], None]] = None,
                   include_means: bool = True) -> list[MetricsReport]:
    """Run every (point, seed) of the plan; per-seed rows plus a mean row per point.

    Points whose config fails validation are reported as skipped and do
    not abort the sweep.
    """
    say = progress or (lambda s: None)
    reports: list[MetricsReport] = []
    tasks_per_point: list[tuple[dict, list[tuple[SimConfig, str]]]] = []
    for point in plan.points():
        cfgs = []
        for seed in plan.seeds:
            try:
                cfg, label = plan.config_for(point, seed)
                cfg.check()
                cfgs.append((cfg, label))
            except InvalidParameter as exc:
                say(f"skipped point {point} seed {seed}: {exc}")
        tasks_per_point.append((point, cfgs))

    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for point, cfgs in tasks_per_point:
            if not cfgs:
                continue
            if pool is not None:
                rows = list(pool.map(_run_point, cfgs))
            else:
                rows = [_run_point(c) for c in cfgs]
            for row in rows:
                reports.append(row)
                if on_row:
                    on_row(row)
            if include_means and len(rows) > 1:
                mean_row = _mean_report(rows)
                reports.append(mean_row)
                if on_row:
                    on_row(mean_row)
            say(f"point {point}: {len(rows)} run(s) done")
    finally:
        if pool is not None:
            pool.shutdown()
    return reports


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export_csv(reports: Iterable[MetricsReport], path: Optional[str] = None) -> str:
    """Write the report table; returns the CSV text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow([_fmt(v) for v in r.csv_row()])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def export_json(reports: Iterable[MetricsReport], path: Optional[str] = None) -> str:
    rows = []
    for r in reports:
        rows.append({col: val for col, val in zip(CSV_COLUMNS, r.csv_row())})
    text = json.dumps(rows, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_reports_json(path: str) -> list[dict]:
    with open(path) as fh:
        return json.load(fh)


def export_ledger(sim: Simulation, fmt: str, path: Optional[str] = None) -> str:
    """Dump the observer node's ledger as JSON or DOT."""
    store = sim.nodes[sim.observer].store
    if fmt == "json":
        text = json.dumps(export_ledger_json(store), indent=2, sort_keys=True)
    elif fmt == "dot":
        text = export_ledger_dot(store)
    else:
        raise InvalidParameter(f"unknown ledger export format {fmt!r}")
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def export_trace(sim: Simulation, path: Optional[str] = None) -> str:
    """Newline-delimited trace records (time, node, kind, slot, details)."""
    lines = []
    for rec in sim.trace:
        t, node, kind, slot, *rest = rec
        lines.append(json.dumps(
            {"time": t, "node": node, "event": kind, "tournament": slot,
             "info": list(rest)}, sort_keys=True))
    text = "\n".join(lines) + ("\n" if lines else "")
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def write_run_dir(out_dir: str, cfg: SimConfig, sim: Simulation,
                  reports: list[MetricsReport], trace: bool = False,
                  config_label: str = "custom") -> None:
    os.makedirs(out_dir, exist_ok=True)
    payload = cfg.to_dict()
    payload["config_label"] = config_label
    # disclosed measurement window: these slots are excluded from the
    # throughput and latency averages
    payload["warmup_slots_excluded"] = cfg.effective_warmup()
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    export_csv(reports, os.path.join(out_dir, "metrics.csv"))
    export_json(reports, os.path.join(out_dir, "metrics.json"))
    if trace:
        export_trace(sim, os.path.join(out_dir, "trace.ndjson"))


def replay(run_dir: str) -> tuple[bool, str, str]:
    """Re-run a stored (config, seed) and compare CSV bytes.

    Returns (identical, original_csv, replay_csv).
    """
    with open(os.path.join(run_dir, "config.json")) as fh:
        stored = json.load(fh)
    label = stored.pop("config_label", "custom")
    stored.pop("warmup_slots_excluded", None)
    cfg = SimConfig.from_dict(stored)
    with open(os.path.join(run_dir, "metrics.csv")) as fh:
        original = fh.read()
    sim = run(cfg)
    fresh = export_csv([compute(sim, label)])
    return fresh == original, original, fresh
