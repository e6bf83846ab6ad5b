"""Experiment driver: CSV contract, exports, plans, replay fidelity."""

import csv
import io
import json
import os

import pytest

from cdag.config import CONFIG_PRESETS, SimConfig, apply_env_overrides
from cdag.harness import (MEAN_SEED, ExperimentPlan, export_csv, export_json,
                          export_ledger, export_trace, replay, run_experiment,
                          write_run_dir)
from cdag.metrics import CSV_COLUMNS, compute
from cdag.simulation import run


def tiny_cfg(**kw):
    base = dict(n=8, alpha=2, k=4, tau=20.0, duration_slots=6, seed=1,
                tx_rate=0.05, block_size_bytes=50_000)
    base.update(kw)
    return SimConfig(**base)


class TestCsvExport:
    def test_column_contract(self):
        text = export_csv([])
        header = text.splitlines()[0]
        assert header.split(",") == CSV_COLUMNS
        assert CSV_COLUMNS == [
            "n", "alpha", "config", "tau_s", "block_bytes", "malicious_frac",
            "seed", "slots", "throughput_tps", "latency_min_s", "latency_avg_s",
            "latency_max_s", "orphan_rate", "avg_round_s",
            "avg_blocks_per_cblock"]

    def test_empty_report_set_is_header_only(self):
        assert export_csv([]) == ",".join(CSV_COLUMNS) + "\n"

    def test_rows_parse_back(self, tmp_path):
        sim = run(tiny_cfg())
        report = compute(sim)
        path = str(tmp_path / "m.csv")
        export_csv([report], path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert int(rows[0]["n"]) == 8
        assert float(rows[0]["orphan_rate"]) == report.orphan_rate

    def test_json_round_trip(self, tmp_path):
        sim = run(tiny_cfg())
        report = compute(sim)
        path = str(tmp_path / "m.json")
        export_json([report], path)
        with open(path) as fh:
            rows = json.load(fh)
        assert rows[0]["seed"] == report.seed
        assert rows[0]["throughput_tps"] == report.throughput_tps


class TestExperimentPlan:
    def test_points_are_cartesian_in_axis_order(self):
        plan = ExperimentPlan(base=tiny_cfg(),
                              axes={"n": [8, 16], "alpha": [2]},
                              seeds=[1, 2])
        pts = plan.points()
        assert pts == [{"n": 8, "alpha": 2}, {"n": 16, "alpha": 2}]

    def test_serialization_round_trip(self, tmp_path):
        plan = ExperimentPlan(base=tiny_cfg(), axes={"config": ["config1"]},
                              seeds=[3, 4], min_slots=6)
        path = str(tmp_path / "plan.json")
        plan.save(path)
        loaded = ExperimentPlan.load(path)
        assert loaded.to_dict() == plan.to_dict()

    def test_config_presets_apply_block_and_tau(self):
        plan = ExperimentPlan(base=tiny_cfg(), axes={"config": ["config3"]},
                              seeds=[1], min_slots=6)
        cfg, label = plan.config_for({"config": "config3"}, seed=1)
        assert label == "config3"
        assert cfg.block_size_bytes == CONFIG_PRESETS["config3"]["block_size_bytes"]
        assert cfg.tau == CONFIG_PRESETS["config3"]["tau"]

    def test_single_point_single_seed_one_row(self):
        plan = ExperimentPlan(base=tiny_cfg(), axes={}, seeds=[1], min_slots=6)
        rows = run_experiment(plan)
        assert len(rows) == 1

    def test_two_seeds_add_mean_row(self):
        plan = ExperimentPlan(base=tiny_cfg(), axes={}, seeds=[1, 2], min_slots=6)
        rows = run_experiment(plan)
        assert len(rows) == 3
        mean_row = rows[-1]
        assert mean_row.seed == MEAN_SEED
        for field in ("throughput_tps", "orphan_rate", "avg_blocks_per_cblock"):
            vals = [getattr(r, field) for r in rows[:2]]
            expect = sum(vals) / 2
            assert getattr(mean_row, field) == pytest.approx(expect, nan_ok=True)

    def test_three_config_sweep_yields_three_rows(self):
        plan = ExperimentPlan(
            base=tiny_cfg(),
            axes={"config": ["config1", "config2", "config3"]},
            seeds=[1], min_slots=6)
        rows = run_experiment(plan)
        assert [r.config_label for r in rows] == ["config1", "config2", "config3"]
        assert [r.tau_s for r in rows] == [20.0, 15.0, 10.0]

    def test_infeasible_point_is_skipped_not_fatal(self):
        plan = ExperimentPlan(base=tiny_cfg(),
                              axes={"alpha": [2, 9]},  # 2^9 > 8: invalid
                              seeds=[1], min_slots=6)
        notes = []
        rows = run_experiment(plan, progress=notes.append)
        assert len(rows) == 1
        assert any("skipped" in n for n in notes)


class TestRunDirAndReplay:
    def test_replay_reproduces_csv_bytes(self, tmp_path):
        cfg = tiny_cfg(double_spend_rate=0.1)
        sim = run(cfg)
        report = compute(sim)
        out = str(tmp_path / "run")
        write_run_dir(out, cfg, sim, [report])
        ok, original, fresh = replay(out)
        assert ok, f"replay diverged:\n{original}\n---\n{fresh}"

    def test_trace_export_is_parseable(self, tmp_path):
        cfg = tiny_cfg()
        sim = run(cfg)
        path = str(tmp_path / "trace.ndjson")
        export_trace(sim, path)
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                assert {"time", "node", "event", "tournament"} <= rec.keys()

    def test_ledger_exports(self, tmp_path):
        sim = run(tiny_cfg())
        text = export_ledger(sim, "json")
        dump = json.loads(text)
        assert "cblocks" in dump and "blocks" in dump
        dot = export_ledger(sim, "dot")
        assert dot.startswith("digraph")


class TestMetricReconciliation:
    def test_throughput_times_window_equals_confirmed_count(self):
        sim = run(tiny_cfg(duration_slots=10))
        report = compute(sim)
        assert report.throughput_tps == report.confirmed_txs / report.window_s

    def test_orphan_rate_bounds(self):
        report = compute(run(tiny_cfg(duration_slots=8)))
        assert 0.0 <= report.orphan_rate <= 1.0


class TestEnvOverrides:
    def test_env_prefix_applies(self):
        cfg = apply_env_overrides(SimConfig(), environ={"CDAG_TAU": "12.5",
                                                        "CDAG_N": "24"})
        assert cfg.tau == 12.5
        assert cfg.n == 24

    def test_latency_range_env(self):
        cfg = apply_env_overrides(
            SimConfig(), environ={"CDAG_LATENCY_MS_RANGE": "5,50"})
        assert cfg.latency_ms_range == (5.0, 50.0)


class TestCli:
    def test_run_and_replay_through_cli(self, tmp_path):
        from cdag.cli import main
        out = str(tmp_path / "cli-run")
        rc = main(["run", "--n", "8", "--alpha", "2", "--k", "4",
                   "--duration-slots", "6", "--seed", "3",
                   "--block-size-bytes", "50000", "--out", out])
        assert rc == 0
        assert os.path.exists(os.path.join(out, "metrics.csv"))
        assert main(["replay", out]) == 0

    def test_sweep_writes_plan_and_csv(self, tmp_path):
        from cdag.cli import main
        out = str(tmp_path / "cli-sweep")
        rc = main(["sweep", "--n", "8", "--alpha", "2", "--k", "4",
                   "--duration-slots", "6", "--block-size-bytes", "50000",
                   "--seeds", "2", "--out", out])
        assert rc == 0
        with open(os.path.join(out, "metrics.csv")) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3  # two seeds plus the mean row
        assert os.path.exists(os.path.join(out, "plan.json"))

    def test_config_file_flag(self, tmp_path):
        from cdag.cli import main
        cfg_path = str(tmp_path / "cfg.json")
        with open(cfg_path, "w") as fh:
            json.dump({"n": 8, "alpha": 2, "k": 4, "duration_slots": 6,
                       "block_size_bytes": 50_000, "seed": 9}, fh)
        out = str(tmp_path / "from-file")
        rc = main(["run", "--config-file", cfg_path, "--out", out])
        assert rc == 0
        with open(os.path.join(out, "config.json")) as fh:
            stored = json.load(fh)
        assert stored["n"] == 8
        assert stored["seed"] == 9
        assert stored["warmup_slots_excluded"] == 4

    def test_export_ledger_flag(self, tmp_path):
        from cdag.cli import main
        out = str(tmp_path / "cli-ledger")
        rc = main(["run", "--n", "8", "--alpha", "2", "--k", "4",
                   "--duration-slots", "6", "--block-size-bytes", "50000",
                   "--out", out, "--export-ledger", "dot"])
        assert rc == 0
        assert os.path.exists(os.path.join(out, "ledger.dot"))