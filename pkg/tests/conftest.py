"""Shared fixtures: hand-built ledgers, blocks and transactions."""

from __future__ import annotations

import itertools

import pytest

from cdag.bucketing import Transaction, bucket_of
from cdag.colosseum import PoWin, ROUND_ENTRY
from cdag.hashing import digest
from cdag.ledger import Block, CBlock, LedgerStore


class LedgerBuilder:
    """Convenience builder for ledger fixtures with real hashes."""

    def __init__(self, alpha: int = 4, b: int = 40):
        self.alpha = alpha
        self.b = b
        self.store = LedgerStore(alpha)
        self._counter = itertools.count(1)

    def tx(self, inputs=None, size: int = 350) -> Transaction:
        i = next(self._counter)
        if inputs is None:
            inputs = {digest("fixture-input", i)}
        return Transaction(
            hash=digest("fixture-tx", i),
            inputs=frozenset(inputs),
            byte_size=size,
        )

    def tx_in_bucket(self, bucket: int, inputs=None, size: int = 350) -> Transaction:
        """A transaction whose hash lands in the requested bucket."""
        while True:
            tx = self.tx(inputs=inputs, size=size)
            if bucket_of(tx.hash, self.b) == bucket:
                return tx

    def powin_for(self, proposer: int, tournament_no: int, round_no=None) -> PoWin:
        rnd = self.alpha if round_no is None else round_no
        opponent = proposer + 1000
        return PoWin.create(
            match_id=digest("fixture-match", tournament_no, rnd, proposer),
            tournament_no=tournament_no,
            round_no=rnd,
            players=(proposer, opponent),
            winner=proposer,
            validator=0,
            prev_powin_hashes=(ROUND_ENTRY, ROUND_ENTRY),
        )

    def block(self, prev: bytes, tournament_no: int, proposer: int,
              bucket: int = None, txs=None, fouls: int = 0,
              byte_size: int = None) -> Block:
        if bucket is None:
            bucket = proposer % self.b
        if txs is None:
            txs = [self.tx_in_bucket(bucket)]
        powin = self.powin_for(proposer, tournament_no)
        size = byte_size if byte_size is not None else sum(t.byte_size for t in txs)
        blk = Block.create(prev, bucket, tournament_no, proposer, powin, txs, size)
        self.store.add_block(blk, txs)
        for _ in range(fouls):
            self.store.add_foul(blk.hash)
        return blk

    def cblock(self, tournament_no: int, prev: bytes, blocks) -> CBlock:
        cb = CBlock.create(tournament_no, prev, [b.hash for b in blocks])
        self.store.add_cblock(cb)
        return cb

    def chain(self, slots: int, blocks_per_slot: int = 3,
              start_proposer: int = 0) -> list[CBlock]:
        """Linear chain of foul-free CBlocks on fresh buckets."""
        tip = self.store.genesis
        out = []
        proposer = start_proposer
        for t in range(1, slots + 1):
            blocks = []
            for j in range(blocks_per_slot):
                blocks.append(self.block(tip, t, proposer, bucket=j))
                proposer += 1
            cb = self.cblock(t, tip, blocks)
            out.append(cb)
            tip = cb.hash
        return out


@pytest.fixture
def builder() -> LedgerBuilder:
    return LedgerBuilder()


class FakeConfig:
    """Just enough of SimConfig for validate_block in ledger tests."""

    def __init__(self, b: int = 40, block_size_bytes: int = 1_000_000):
        self.b = b
        self.block_size_bytes = block_size_bytes


@pytest.fixture
def ledger_config() -> FakeConfig:
    return FakeConfig()
