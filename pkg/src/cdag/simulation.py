"""Deterministic discrete-event engine driving one seeded run.

Events fire in (time, sequence) order; all randomness flows from RNG
streams derived from the run seed, so identical configs produce identical
event traces bit for bit.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass

from .barrier import ORACLE_ID, OracleState
from .bucketing import Transaction
from .colosseum import AdversaryProfile, HONEST
from .config import SimConfig
from .hashing import derive_seed, digest
from .ledger import Block
from .network import FIXED_SIZES, LinkModel, Message, MessageKind, RingTable
from .node import ProtocolNode, SyncPayload


@dataclass(slots=True)
class EmitRecord:
    block_hash: bytes
    proposer: int
    tournament_no: int
    time: float
    n_txs: int
    tx_hashes: tuple[bytes, ...]


class Simulation:
    """One seeded run: nodes, links, oracle, event queue and counters."""

    def __init__(self, cfg: SimConfig):
        cfg.check()
        self.cfg = cfg
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self.ring = RingTable(cfg.n, derive_seed(cfg.seed, "topology"))
        lat = (cfg.latency_ms_range[0] / 1000.0, cfg.latency_ms_range[1] / 1000.0)
        self.link = LinkModel(cfg.n, derive_seed(cfg.seed, "links"), lat,
                              cfg.bandwidth_bps)
        self.oracle = OracleState(cfg.tau)
        self.profiles = self._assign_adversaries()
        self.nodes = [ProtocolNode(i, self, self.profiles[i]) for i in range(cfg.n)]
        self.observer = min(i for i in range(cfg.n) if self.profiles[i].is_honest()) \
            if any(p.is_honest() for p in self.profiles) else 0

        self._keepers_cache: dict[tuple[int, int], list[int]] = {}
        self._validator_cache: dict[bytes, int] = {}
        self.trace: list[tuple] = []
        self.emitted: dict[bytes, EmitRecord] = {}
        self.qualified_per_slot: dict[int, set[int]] = {}
        self.round_times: list[tuple[int, int, float]] = []
        self.confirm_times: dict[bytes, float] = {}
        self._foul_trace_seen: set[tuple[bytes, int]] = set()
        self.fouls_declared: list[tuple] = []
        self.delivered_msgs = 0

        self._tx_rng = random.Random(derive_seed(cfg.seed, "txgen"))
        self._tx_counter = 0
        self._recent_inputs: list[bytes] = []

    # --- adversary assignment -------------------------------------------------

    def _assign_adversaries(self) -> list[AdversaryProfile]:
        cfg = self.cfg
        profiles = [HONEST] * cfg.n
        rng = random.Random(derive_seed(cfg.seed, "adversary"))
        for spec in cfg.malicious:
            if spec.nodes is not None:
                chosen = [i for i in spec.nodes if 0 <= i < cfg.n]
            else:
                count = int(round((spec.fraction or 0.0) * cfg.n))
                chosen = rng.sample(range(cfg.n), min(count, cfg.n))
            profile = spec.profile()
            for i in chosen:
                profiles[i] = profile
        return profiles

    # --- event queue ------------------------------------------------------------

    def at(self, when: float, fn, *args) -> None:
        if when > self.cfg.horizon():
            return
        self._seq += 1
        heapq.heappush(self._heap, (when, self._seq, fn, args))

    def run(self) -> "Simulation":
        for node in self.nodes:
            node.start()
        if self.cfg.tx_rate > 0:
            for i in range(self.cfg.n):
                self._schedule_next_tx(i)
        horizon = self.cfg.horizon()
        heap = self._heap
        while heap:
            when, _, fn, args = heapq.heappop(heap)
            if when > horizon:
                break
            self.now = when
            fn(*args)
        self.now = horizon
        return self

    # --- messaging ---------------------------------------------------------------

    def _size_of(self, kind: MessageKind, byte_size: int) -> int:
        if byte_size > 0:
            return byte_size
        return FIXED_SIZES.get(kind, 128)

    def send_direct(self, src: int, dst: int, kind: MessageKind, payload,
                    tournament_no: int, byte_size: int = 0) -> None:
        size = self._size_of(kind, byte_size)
        if dst == ORACLE_ID:
            self._oracle_request(src, size)
            return
        arrival = self.link.send(self.now, src, dst, size)
        msg = Message(kind, src, tournament_no, size, payload)
        self.at(arrival, self._deliver, dst, msg)

    def _deliver(self, dst: int, msg: Message) -> None:
        self.delivered_msgs += 1
        self.nodes[dst].on_message(msg)

    def _oracle_request(self, src: int, size: int) -> None:
        rtt = 2 * self.link.latency(src, (src + 1) % self.cfg.n)
        cert = self.oracle.bootstrap(self.now)
        reply = Message(MessageKind.BARRIER_SYNC, ORACLE_ID,
                        cert.tournament_no, FIXED_SIZES[MessageKind.BARRIER_SYNC],
                        SyncPayload(request=False, cert=cert))
        self.at(self.now + rtt, self._deliver, src, reply)

    def gossip_from(self, origin: int, kind: MessageKind, payload, key: bytes,
                    tournament_no: int, byte_size: int = 0) -> None:
        size = self._size_of(kind, byte_size)
        msg = Message(kind, origin, tournament_no, size, payload, 0, key)
        node = self.nodes[origin]
        node.seen.add(key)
        self.forward_gossip(origin, msg)

    def forward_gossip(self, holder: int, msg: Message) -> None:
        """Relay to two seeded-random routing peers plus the ring successor."""
        node = self.nodes[holder]
        table = self.ring.routing_table(holder)
        picks = node.rng.sample(table, min(2, len(table)))
        targets = set(picks)
        targets.add(self.ring.successor(holder))
        targets.discard(holder)
        fwd = Message(msg.kind, msg.origin, msg.tournament_no, msg.byte_size,
                      msg.payload, msg.hop_count + 1, msg.gossip_key)
        for dst in sorted(targets):
            arrival = self.link.send(self.now, holder, dst, msg.byte_size)
            self.at(arrival, self._deliver, dst, fwd)

    # --- deterministic protocol placement -----------------------------------------

    def keepers_for(self, player: int, tournament_no: int) -> list[int]:
        key = (player, tournament_no)
        got = self._keepers_cache.get(key)
        if got is None:
            from .colosseum import keepers_for as _keepers
            got = _keepers(player, tournament_no, self.cfg.k, self.ring)
            self._keepers_cache[key] = got
        return got

    def validator_for(self, match_id: bytes) -> int:
        got = self._validator_cache.get(match_id)
        if got is None:
            from .colosseum import validator_for as _validator
            got = _validator(match_id, self.ring)
            self._validator_cache[match_id] = got
        return got

    # --- transaction generation -----------------------------------------------------

    def _schedule_next_tx(self, origin: int) -> None:
        gap = self._tx_rng.expovariate(self.cfg.tx_rate)
        when = self.now + gap
        if when <= (self.cfg.duration_slots + 1) * self.cfg.tau:
            self.at(when, self._emit_tx, origin)

    def _emit_tx(self, origin: int) -> None:
        cfg = self.cfg
        self._tx_counter += 1
        if (self._recent_inputs
                and self._tx_rng.random() < cfg.double_spend_rate):
            ref = self._recent_inputs[self._tx_rng.randrange(len(self._recent_inputs))]
            inputs = frozenset({ref})
        else:
            ref = digest("spend", self._tx_counter, origin)
            inputs = frozenset({ref})
            self._recent_inputs.append(ref)
            if len(self._recent_inputs) > 256:
                self._recent_inputs = self._recent_inputs[-128:]
        payload = digest("txpayload", self._tx_counter)
        tx = Transaction(
            hash=digest("tx", self._tx_counter, origin, *sorted(inputs)),
            inputs=inputs,
            byte_size=cfg.tx_bytes,
            payload=payload[:8],
        )
        node = self.nodes[origin]
        node.pool.add(tx)
        node.gossip(MessageKind.TX_GOSSIP, tx, key=digest("txg", tx.hash),
                    tournament_no=node.slot, byte_size=tx.byte_size)
        self._schedule_next_tx(origin)

    # --- run bookkeeping ---------------------------------------------------------------

    def trace_event(self, kind: str, node: int, tournament_no: int, *info) -> None:
        if self.cfg.collect_trace:
            self.trace.append((self.now, node, kind, tournament_no) + info)

    def trace_foul(self, match_id: bytes, subject: int, tournament_no: int,
                   basis: str, seen_by: int) -> None:
        key = (match_id, subject)
        if key in self._foul_trace_seen:
            return
        self._foul_trace_seen.add(key)
        self.fouls_declared.append((self.now, subject, tournament_no, basis))
        if self.cfg.collect_trace:
            self.trace.append((self.now, seen_by, "foul", tournament_no, subject,
                               basis, match_id.hex()[:12]))

    def record_emit(self, block: Block, proposer: int) -> None:
        self.emitted[block.hash] = EmitRecord(
            block.hash, proposer, block.tournament_no, self.now,
            len(block.txs), block.txs)
        self.trace_event("emit", proposer, block.tournament_no,
                         block.hash.hex()[:12])

    def record_qualified(self, tournament_no: int, node: int) -> None:
        self.qualified_per_slot.setdefault(tournament_no, set()).add(node)
        self.trace_event("qualified", node, tournament_no)

    def record_round_time(self, tournament_no: int, round_no: int,
                          duration: float) -> None:
        self.round_times.append((tournament_no, round_no, duration))

    def record_confirm(self, node: int, block_hash: bytes, when: float) -> None:
        if node == self.observer and block_hash not in self.confirm_times:
            self.confirm_times[block_hash] = when
            self.trace_event("confirm", node, -1, block_hash.hex()[:12])

    # --- end-of-run views ---------------------------------------------------------------

    def honest_nodes(self) -> list[ProtocolNode]:
        return [n for n in self.nodes if n.profile.is_honest()]


def run(config: SimConfig) -> Simulation:
    """Drive one seeded run to its horizon and return the final state."""
    return Simulation(config).run()
