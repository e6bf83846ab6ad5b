"""Transaction pool partitioned into disjoint buckets by transaction hash.

Proposers draw whole blocks from a single bucket, which keeps blocks from
different buckets free of intersecting transactions. Double spends can
still cross buckets; those are classified by `conflicts` and resolved at
convergence time by the ledger.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from .errors import InvalidParameter, NoTransactions
from .hashing import hash_to_int


@dataclass(frozen=True, slots=True)
class Transaction:
    hash: bytes
    inputs: frozenset[bytes]
    byte_size: int
    payload: bytes = b""


def bucket_of(tx_hash: bytes, b: int) -> int:
    """Bucket id for a transaction hash: hash value modulo the bucket count."""
    if b < 1:
        raise InvalidParameter(f"bucket count must be >= 1, got {b}")
    return hash_to_int(tx_hash) % b


class ConflictKind(Enum):
    NONE = "none"
    INTERSECTING = "intersecting"
    DOUBLE_SPEND = "double_spend"


def conflicts(a, b) -> ConflictKind:
    """Classify the conflict between two blocks.

    Intersecting (shared transactions) takes precedence over a shared
    spend reference across distinct transactions.
    """
    if a.tx_set & b.tx_set:
        return ConflictKind.INTERSECTING
    if a.input_refs & b.input_refs:
        return ConflictKind.DOUBLE_SPEND
    return ConflictKind.NONE


class TxPool:
    """B disjoint FIFO queues of unconfirmed transactions."""

    def __init__(self, b: int):
        if b < 1:
            raise InvalidParameter(f"bucket count must be >= 1, got {b}")
        self.b = b
        # dicts preserve insertion order, giving FIFO with O(1) removal
        self.buckets: list[dict[bytes, Transaction]] = [dict() for _ in range(b)]
        self.index: dict[bytes, int] = {}
        self.by_input: dict[bytes, set[bytes]] = {}

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, tx_hash: bytes) -> bool:
        return tx_hash in self.index

    def add(self, tx: Transaction) -> bool:
        """Insert a transaction into its bucket. Duplicates are ignored."""
        if tx.hash in self.index:
            return False
        bid = bucket_of(tx.hash, self.b)
        self.buckets[bid][tx.hash] = tx
        self.index[tx.hash] = bid
        for ref in tx.inputs:
            self.by_input.setdefault(ref, set()).add(tx.hash)
        return True

    def remove(self, tx_hash: bytes) -> bool:
        bid = self.index.pop(tx_hash, None)
        if bid is None:
            return False
        tx = self.buckets[bid].pop(tx_hash)
        for ref in tx.inputs:
            owners = self.by_input.get(ref)
            if owners is not None:
                owners.discard(tx_hash)
                if not owners:
                    del self.by_input[ref]
        return True

    def non_empty_buckets(self) -> list[int]:
        return [i for i in range(self.b) if self.buckets[i]]


def select_bucket(rng: random.Random, pool: TxPool, announced: Iterable[int]) -> int:
    """Pick a uniformly random non-empty bucket, avoiding announced ones.

    When every non-empty bucket has already been announced by another
    proposer the collision is accepted rather than stalling the slot.
    """
    non_empty = pool.non_empty_buckets()
    if not non_empty:
        raise NoTransactions("transaction pool is empty")
    announced = set(announced)
    eligible = [i for i in non_empty if i not in announced] or non_empty
    return eligible[rng.randrange(len(eligible))]


def fill_block(
    bucket: int,
    pool: TxPool,
    max_bytes: int,
    spent_inputs: Optional[frozenset[bytes]] = None,
    exclude_txs: Optional[frozenset[bytes]] = None,
) -> list[Transaction]:
    """FIFO prefix of one bucket queue, skipping conflicting transactions.

    A transaction is skipped when it spends an input already spent by an
    earlier selected transaction (or by `spent_inputs`, the caller's view
    of the chain), or appears in `exclude_txs`. Selection stops at the
    first transaction that would exceed the byte budget.
    """
    if not 0 <= bucket < pool.b:
        raise InvalidParameter(f"bucket {bucket} out of range [0, {pool.b})")
    taken: list[Transaction] = []
    used: set[bytes] = set(spent_inputs or ())
    skip = exclude_txs or frozenset()
    total = 0
    for tx in pool.buckets[bucket].values():
        if tx.hash in skip or (tx.inputs & used):
            continue
        if total + tx.byte_size > max_bytes:
            break
        taken.append(tx)
        used.update(tx.inputs)
        total += tx.byte_size
    return taken


def remove_confirmed(pool: TxPool, block) -> int:
    """Drop a confirmed block's transactions and anything conflicting with them."""
    removed = 0
    for tx_hash in block.txs:
        if pool.remove(tx_hash):
            removed += 1
    for ref in sorted(block.input_refs):
        for tx_hash in sorted(pool.by_input.get(ref, ())):
            if pool.remove(tx_hash):
                removed += 1
    return removed
