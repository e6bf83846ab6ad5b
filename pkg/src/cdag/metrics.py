"""Run metrics: throughput, confirmation latency, orphan accounting.

Warm-up slots are excluded from throughput and latency averages. The
orphan rate is computed over blocks behind the convergence frontier
(slots for which a converging block exists on the main chain); blocks of
newer slots are classified in-flight, and the three classes together
always account for every proposed block exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .simulation import Simulation


@dataclass(slots=True)
class MetricsReport:
    n: int
    alpha: int
    config_label: str
    tau_s: float
    block_bytes: int
    malicious_frac: float
    seed: int
    slots_run: int
    throughput_tps: float
    latency_min_s: float
    latency_avg_s: float
    latency_max_s: float
    orphan_rate: float
    avg_round_time_s: float
    avg_blocks_per_cblock: float
    # reconciliation extras, not part of the CSV schema
    confirmed_txs: int = 0
    window_s: float = 0.0
    proposed_blocks: int = 0
    main_chain_blocks: int = 0
    orphaned_blocks: int = 0
    in_flight_blocks: int = 0
    qualified_mean: float = 0.0
    fouls: int = 0
    # blocks referencing a converging block older than the previous slot:
    # allowed, treated as a fork, flagged here
    deep_fork_blocks: int = 0

    def csv_row(self) -> list:
        return [self.n, self.alpha, self.config_label, self.tau_s,
                self.block_bytes, self.malicious_frac, self.seed, self.slots_run,
                self.throughput_tps, self.latency_min_s, self.latency_avg_s,
                self.latency_max_s, self.orphan_rate, self.avg_round_time_s,
                self.avg_blocks_per_cblock]


CSV_COLUMNS = ["n", "alpha", "config", "tau_s", "block_bytes", "malicious_frac",
               "seed", "slots", "throughput_tps", "latency_min_s", "latency_avg_s",
               "latency_max_s", "orphan_rate", "avg_round_s",
               "avg_blocks_per_cblock"]


def confirmed_prefix_blocks(node) -> list[bytes]:
    """Blocks in the confirmed prefix of a node's final heaviest chain.

    The prefix ends at the first converging block that does not satisfy
    the confirmation rule at the final tip.
    """
    store = node.store
    tip = node.main_tip
    path = store.chain_to_genesis(tip)
    total = sum(len(cb.included) for cb in path)
    delta = max(1, node.cfg.n // (2 ** node.cfg.alpha))
    f_min = node.cfg.f
    tip_t = path[-1].tournament_no
    out: list[bytes] = []
    running = 0
    for cb in path:
        running += len(cb.included)
        if not cb.included and cb.tournament_no == 0:
            continue
        ahead = total - running
        count = ahead // delta
        spanned = tip_t - cb.tournament_no
        if count >= f_min and spanned < 2 * count:
            out.extend(cb.included)
        else:
            break
    return out


def compute(sim: Simulation, config_label: str = "custom") -> MetricsReport:
    cfg = sim.cfg
    observer = sim.nodes[sim.observer]
    warmup = cfg.effective_warmup()

    path = observer.store.chain_to_genesis(observer.main_tip)
    main_blocks: set[bytes] = set()
    cblock_sizes: list[int] = []
    last_converged = 0
    for cb in path:
        main_blocks.update(cb.included)
        if cb.tournament_no > 0:
            last_converged = max(last_converged, cb.tournament_no)
            if cb.tournament_no > warmup:
                cblock_sizes.append(len(cb.included))

    proposed = list(sim.emitted.values())
    behind = [e for e in proposed if e.tournament_no <= last_converged]
    orphaned = [e for e in behind if e.block_hash not in main_blocks]
    in_flight = [e for e in proposed
                 if e.tournament_no > last_converged
                 and e.block_hash not in main_blocks]
    orphan_rate = (len(orphaned) / len(behind)) if behind else 0.0

    # confirmation is irreversible, so the observer's latched set is the
    # confirmed ledger at run end
    confirmed_windowed = 0
    for h in observer.latched:
        rec = sim.emitted.get(h)
        if rec is not None and rec.tournament_no > warmup:
            confirmed_windowed += rec.n_txs
    window_s = cfg.horizon() - (warmup + 1) * cfg.tau
    throughput = confirmed_windowed / window_s if window_s > 0 else float("nan")

    latencies = []
    for h, t_confirm in sim.confirm_times.items():
        rec = sim.emitted.get(h)
        if rec is not None and rec.tournament_no > warmup:
            latencies.append(t_confirm - rec.time)
    if latencies:
        lat_min, lat_avg, lat_max = (min(latencies),
                                     sum(latencies) / len(latencies),
                                     max(latencies))
    else:
        lat_min = lat_avg = lat_max = float("nan")

    durations = [d for (t, _, d) in sim.round_times if t > warmup]
    avg_round = sum(durations) / len(durations) if durations else float("nan")
    avg_blocks = (sum(cblock_sizes) / len(cblock_sizes)) if cblock_sizes else 0.0

    slots_played = [t for t in sim.qualified_per_slot if t > warmup]
    qualified_mean = (sum(len(sim.qualified_per_slot[t]) for t in slots_played)
                      / len(slots_played)) if slots_played else 0.0

    deep_forks = 0
    for blk in observer.store.blocks.values():
        parent = observer.store.cblocks.get(blk.prev_cblock)
        if parent is not None and blk.tournament_no - parent.tournament_no > 1:
            deep_forks += 1

    return MetricsReport(
        n=cfg.n, alpha=cfg.alpha, config_label=config_label, tau_s=cfg.tau,
        block_bytes=cfg.block_size_bytes,
        malicious_frac=cfg.malicious_fraction(), seed=cfg.seed,
        slots_run=cfg.duration_slots,
        throughput_tps=throughput,
        latency_min_s=lat_min, latency_avg_s=lat_avg, latency_max_s=lat_max,
        orphan_rate=orphan_rate,
        avg_round_time_s=avg_round,
        avg_blocks_per_cblock=avg_blocks,
        confirmed_txs=confirmed_windowed,
        window_s=window_s,
        proposed_blocks=len(proposed),
        main_chain_blocks=len(main_blocks & {e.block_hash for e in proposed}),
        orphaned_blocks=len(orphaned),
        in_flight_blocks=len(in_flight),
        qualified_mean=qualified_mean,
        fouls=len(sim.fouls_declared),
        deep_fork_blocks=deep_forks,
    )


def conservation_holds(report: MetricsReport) -> bool:
    """Proposed blocks split exactly into main-chain, orphaned and in-flight."""
    return (report.main_chain_blocks + report.orphaned_blocks
            + report.in_flight_blocks) == report.proposed_blocks


def confirmed_tx_sets(sim: Simulation) -> dict[int, list[bytes]]:
    """Per honest node: transactions in its final confirmed prefix, in order."""
    out = {}
    for node in sim.honest_nodes():
        txs: list[bytes] = []
        for h in confirmed_prefix_blocks(node):
            txs.extend(node.store.blocks[h].txs)
        out[node.id] = txs
    return out
