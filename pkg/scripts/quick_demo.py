#!/usr/bin/env python3
"""One small seeded run with a ledger dump, for kicking the tires."""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from cdag.config import SimConfig, malicious_fraction_spec
from cdag.harness import export_csv, export_ledger
from cdag.metrics import compute
from cdag.simulation import run


def main() -> int:
    cfg = SimConfig(n=16, alpha=3, k=8, tau=20.0, duration_slots=18, seed=7,
                    tx_rate=0.08, double_spend_rate=0.05,
                    block_size_bytes=160_000,
                    malicious=(malicious_fraction_spec(0.2),))
    sim = run(cfg)
    report = compute(sim)
    sys.stdout.write(export_csv([report]))
    print(f"\nproposed={report.proposed_blocks} main={report.main_chain_blocks} "
          f"orphaned={report.orphaned_blocks} in-flight={report.in_flight_blocks} "
          f"fouls={report.fouls}", file=sys.stderr)
    out = os.environ.get("DEMO_OUT")
    if out:
        os.makedirs(out, exist_ok=True)
        export_ledger(sim, "dot", os.path.join(out, "ledger.dot"))
        export_ledger(sim, "json", os.path.join(out, "ledger.json"))
        print(f"ledger dumps in {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
