"""Ring topology, message framing and the link timing model.

Nodes sit evenly spaced on a 64-bit identifier circle; any digest maps to
the node at or clockwise-next-from its key position. Links have a seeded
per-pair propagation latency plus serialization time; each node's egress
is a single serial resource, so concurrent sends queue behind each other.
"""

from __future__ import annotations

import random
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum
from math import ceil, log2

from .hashing import derive_seed, hash_to_int

RING_BITS = 64
RING_SIZE = 1 << RING_BITS


class RingTable:
    """Full-membership ring with per-node routing tables."""

    def __init__(self, n: int, seed: int):
        self.n = n
        self.positions = [(i * RING_SIZE) // n for i in range(n)]
        self.routing: list[list[int]] = []
        fanout = max(1, min(n - 1, ceil(log2(n)) if n > 1 else 1))
        for node in range(n):
            rng = random.Random(derive_seed(seed, "routing", node))
            others = [p for p in range(n) if p != node]
            self.routing.append(sorted(rng.sample(others, min(fanout, len(others)))))

    def successor(self, node: int) -> int:
        return (node + 1) % self.n

    def lookup(self, key: bytes) -> int:
        """Node owning a key: the first position at or after it, wrapping."""
        pos = hash_to_int(key[:8]) % RING_SIZE if len(key) >= 8 else hash_to_int(key) % RING_SIZE
        idx = bisect_left(self.positions, pos)
        return idx % self.n

    def routing_table(self, node: int) -> list[int]:
        return self.routing[node]


class MessageKind(Enum):
    TX_GOSSIP = "TxGossip"
    HEADER_ANNOUNCE = "HeaderAnnounce"
    BLOCK_BODY = "BlockBody"
    POWIN = "PoWinMsg"
    KEEPER_VOTE = "KeeperVote"
    FOUL_ALERT = "FoulAlert"
    BARRIER_SYNC = "BarrierSync"
    PAIR_PROBE = "PairProbe"
    PAIR_REPLY = "PairReply"
    PAIR_CONFIRM = "PairConfirm"
    GAME_PROPOSAL = "GameProposal"
    MATCH_VOID = "MatchVoid"
    KEEPER_QUERY = "KeeperQuery"
    KEEPER_REPLY = "KeeperReply"


# wire sizes per kind; block bodies and transactions carry their own size
FIXED_SIZES = {
    MessageKind.HEADER_ANNOUNCE: 256,
    MessageKind.POWIN: 256,
    MessageKind.KEEPER_VOTE: 192,
    MessageKind.FOUL_ALERT: 640,
    MessageKind.BARRIER_SYNC: 128,
    MessageKind.PAIR_PROBE: 96,
    MessageKind.PAIR_REPLY: 96,
    MessageKind.PAIR_CONFIRM: 64,
    MessageKind.GAME_PROPOSAL: 128,
    MessageKind.MATCH_VOID: 64,
    MessageKind.KEEPER_QUERY: 96,
    MessageKind.KEEPER_REPLY: 288,
}


@dataclass(slots=True)
class Message:
    kind: MessageKind
    origin: int
    tournament_no: int
    byte_size: int
    payload: object
    hop_count: int = 0
    gossip_key: bytes = b""


def transfer_time(byte_size: int, latency_s: float, bandwidth_bps: float) -> float:
    """Propagation latency plus serialization time for one message."""
    return latency_s + (byte_size * 8.0) / bandwidth_bps


class LinkModel:
    """Per-pair latency draws and per-node egress serialization queues."""

    def __init__(self, n: int, seed: int, latency_range_s: tuple[float, float],
                 bandwidth_bps: float):
        self.n = n
        self.seed = seed
        self.lo, self.hi = latency_range_s
        self.bandwidth_bps = bandwidth_bps
        self._latency: dict[tuple[int, int], float] = {}
        self.egress_free_at = [0.0] * n

    def latency(self, a: int, b: int) -> float:
        if a > b:
            a, b = b, a
        lat = self._latency.get((a, b))
        if lat is None:
            rng = random.Random(derive_seed(self.seed, "latency", a, b))
            lat = rng.uniform(self.lo, self.hi)
            self._latency[(a, b)] = lat
        return lat

    def send(self, now: float, src: int, dst: int, byte_size: int) -> float:
        """Arrival time of one message, serializing on the sender's egress."""
        start = max(now, self.egress_free_at[src])
        serialization = (byte_size * 8.0) / self.bandwidth_bps
        self.egress_free_at[src] = start + serialization
        if src == dst:
            return now
        return start + serialization + self.latency(src, dst)
