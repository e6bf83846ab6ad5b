"""Converging-DAG ledger: blocks, converging blocks, weights, ordering.

Each slot's parallel blocks converge into a single converging block
(CBlock), so the ledger grows as a chain of CBlocks rooted at genesis.
Fork choice is heaviest chain over CBlock tips, where a block's weight is
the proposer's win count minus fouls recorded against it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .bucketing import ConflictKind, Transaction, bucket_of, conflicts
from .errors import CorruptStore, EmptySlot, InvalidParameter, NotFound, NotInChain
from .hashing import ZERO_HASH, digest

GENESIS_PARENT = ZERO_HASH


@dataclass(frozen=True, slots=True)
class Block:
    """One proposer's batch of transactions from a single bucket."""

    hash: bytes
    prev_cblock: bytes
    bucket_id: int
    tournament_no: int
    proposer: int
    powin: object
    txs: tuple[bytes, ...]
    byte_size: int
    tx_set: frozenset[bytes]
    input_refs: frozenset[bytes]

    @staticmethod
    def create(prev_cblock: bytes, bucket_id: int, tournament_no: int,
               proposer: int, powin, txs: list[Transaction],
               byte_size: int) -> "Block":
        tx_hashes = tuple(tx.hash for tx in txs)
        powin_tag = powin.auth_tag if powin is not None else ZERO_HASH
        block_hash = digest(
            "block", prev_cblock, bucket_id, tournament_no, proposer,
            powin_tag, *tx_hashes,
        )
        inputs: set[bytes] = set()
        for tx in txs:
            inputs.update(tx.inputs)
        return Block(
            hash=block_hash,
            prev_cblock=prev_cblock,
            bucket_id=bucket_id,
            tournament_no=tournament_no,
            proposer=proposer,
            powin=powin,
            txs=tx_hashes,
            byte_size=byte_size,
            tx_set=frozenset(tx_hashes),
            input_refs=frozenset(inputs),
        )


@dataclass(frozen=True, slots=True)
class CBlock:
    """Converging block: hash-sorted list of compatible blocks of one slot."""

    hash: bytes
    tournament_no: int
    prev_cblock: bytes
    included: tuple[bytes, ...]

    @staticmethod
    def create(tournament_no: int, prev_cblock: bytes,
               included: Iterable[bytes]) -> "CBlock":
        ordered = tuple(sorted(included))
        return CBlock(
            hash=digest("cblock", tournament_no, prev_cblock, *ordered),
            tournament_no=tournament_no,
            prev_cblock=prev_cblock,
            included=ordered,
        )


def make_genesis() -> CBlock:
    """The distinguished empty CBlock every chain is rooted at."""
    return CBlock(
        hash=digest("cblock-genesis"),
        tournament_no=0,
        prev_cblock=GENESIS_PARENT,
        included=(),
    )


class Violation(Enum):
    UNKNOWN_PARENT = "UnknownParent"
    BUCKET_MISMATCH = "BucketMismatch"
    INTERNAL_CONFLICT = "InternalConflict"
    ANCESTOR_DOUBLE_SPEND = "AncestorDoubleSpend"
    BAD_POWIN = "BadPoWin"
    OVERSIZE = "Oversize"


class LedgerStore:
    """Blocks and CBlocks of one node, rooted at a shared genesis.

    Single writer: only the owning node's event handlers may mutate the
    store. Out-of-order arrivals are parked by the owner in a pending
    buffer outside the store, so every stored CBlock always reaches
    genesis through known parents.
    """

    def __init__(self, alpha: int):
        self.alpha = alpha
        self.genesis_block = make_genesis()
        self.genesis: bytes = self.genesis_block.hash
        self.blocks: dict[bytes, Block] = {}
        self.cblocks: dict[bytes, CBlock] = {self.genesis: self.genesis_block}
        self.fouls: dict[bytes, int] = {}
        self.tips: set[bytes] = {self.genesis}
        self.txs: dict[bytes, Transaction] = {}
        self.block_to_cblock: dict[bytes, bytes] = {}
        # per-CBlock cumulative caches; append-only, so never invalidated
        self._spent: dict[bytes, frozenset[bytes]] = {self.genesis: frozenset()}
        self._seen_txs: dict[bytes, frozenset[bytes]] = {self.genesis: frozenset()}
        self._depth: dict[bytes, int] = {self.genesis: 0}

    def add_block(self, block: Block, txs: Iterable[Transaction] = ()) -> None:
        for tx in txs:
            self.txs.setdefault(tx.hash, tx)
        self.blocks[block.hash] = block

    def add_cblock(self, cblock: CBlock) -> None:
        if cblock.prev_cblock not in self.cblocks:
            raise CorruptStore("parent CBlock missing; park arrivals instead")
        for h in cblock.included:
            if h not in self.blocks:
                raise CorruptStore("included block missing; park arrivals instead")
        if cblock.hash in self.cblocks:
            return
        self.cblocks[cblock.hash] = cblock
        parent = cblock.prev_cblock
        self.tips.discard(parent)
        self.tips.add(cblock.hash)
        spent = set(self._spent[parent])
        seen = set(self._seen_txs[parent])
        for h in cblock.included:
            self.block_to_cblock.setdefault(h, cblock.hash)
            blk = self.blocks[h]
            spent.update(blk.input_refs)
            seen.update(blk.tx_set)
        self._spent[cblock.hash] = frozenset(spent)
        self._seen_txs[cblock.hash] = frozenset(seen)
        self._depth[cblock.hash] = self._depth[parent] + 1

    def spent_inputs_upto(self, cblock_hash: bytes) -> frozenset[bytes]:
        try:
            return self._spent[cblock_hash]
        except KeyError:
            raise NotFound(f"unknown CBlock {cblock_hash.hex()[:12]}") from None

    def txs_upto(self, cblock_hash: bytes) -> frozenset[bytes]:
        try:
            return self._seen_txs[cblock_hash]
        except KeyError:
            raise NotFound(f"unknown CBlock {cblock_hash.hex()[:12]}") from None

    def add_foul(self, block_hash: bytes) -> None:
        self.fouls[block_hash] = self.fouls.get(block_hash, 0) + 1

    def chain_to_genesis(self, tip: bytes) -> list[CBlock]:
        """Path genesis -> tip, inclusive of both ends."""
        path = []
        cur = tip
        while True:
            cb = self.cblocks.get(cur)
            if cb is None:
                raise CorruptStore(f"dangling ancestry at {cur.hex()[:12]}")
            path.append(cb)
            if cb.hash == self.genesis:
                break
            cur = cb.prev_cblock
        path.reverse()
        return path


def compute_delta(n: int, alpha: int) -> int:
    """Maximum expected block proposers per tournament: floor(n / 2^alpha)."""
    if n < 1:
        raise InvalidParameter(f"node count must be >= 1, got {n}")
    if alpha < 1:
        raise InvalidParameter(f"wins required must be >= 1, got {alpha}")
    if 2 ** alpha > n:
        raise InvalidParameter(
            f"2^{alpha} exceeds {n} nodes; no proposer could ever qualify"
        )
    return n // (2 ** alpha)


def block_weight(block_hash: bytes, store: LedgerStore,
                 alpha: Optional[int] = None) -> int:
    """Win count minus fouls, floored at zero."""
    if block_hash not in store.blocks:
        raise NotFound(f"unknown block {block_hash.hex()[:12]}")
    if alpha is None:
        alpha = store.alpha
    return max(0, alpha - store.fouls.get(block_hash, 0))


def chain_weight(tip: bytes, store: LedgerStore) -> int:
    """Sum of block weights along genesis -> tip. Genesis contributes zero."""
    total = 0
    for cb in store.chain_to_genesis(tip):
        for h in cb.included:
            total += block_weight(h, store)
    return total


def select_heaviest_cblock(tips: Iterable[bytes], store: LedgerStore) -> bytes:
    """Heaviest-chain tip; ties broken by smallest CBlock hash."""
    tips = sorted(tips)
    if not tips:
        raise InvalidParameter("no tips to choose from")
    best = None
    best_weight = -1
    for tip in tips:
        w = chain_weight(tip, store)
        if w > best_weight:
            best, best_weight = tip, w
    return best


def _exclusion_edges(blocks: list[Block]) -> list[set[int]]:
    """Adjacency sets: blocks that cannot coexist in one CBlock."""
    n = len(blocks)
    adj: list[set[int]] = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            a, b = blocks[i], blocks[j]
            if a.bucket_id == b.bucket_id or conflicts(a, b) is not ConflictKind.NONE:
                adj[i].add(j)
                adj[j].add(i)
    return adj


def _components(n: int, adj: list[set[int]]) -> list[list[int]]:
    seen = [False] * n
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in sorted(adj[v]):
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


_EXACT_COMPONENT_CAP = 18


def _best_subset(blocks: list[Block], weights: list[int]) -> list[int]:
    """Max-weight conflict-free subset of one candidate group.

    Exhaustive per connected component of the exclusion graph. Ties go to
    the larger subset, then to the lexicographically smallest tuple of
    proposer ids, which keeps CBlock generation identical on every node
    with the same view. Components beyond the exact-search cap fall back
    to a deterministic greedy order; at simulated scale they never occur.
    """
    adj = _exclusion_edges(blocks)
    chosen: list[int] = []
    for comp in _components(len(blocks), adj):
        k = len(comp)
        if k == 1:
            chosen.append(comp[0])
            continue
        if k > _EXACT_COMPONENT_CAP:
            chosen.extend(_greedy_subset(comp, blocks, weights, adj))
            continue
        local = {v: i for i, v in enumerate(comp)}
        adjmask = [0] * k
        for i, v in enumerate(comp):
            for w in adj[v]:
                if w in local:
                    adjmask[i] |= 1 << local[w]
        best_key = None
        best_sel: tuple[int, ...] = ()
        for mask in range(1 << k):
            ok = True
            m = mask
            while m:
                i = (m & -m).bit_length() - 1
                if adjmask[i] & mask:
                    ok = False
                    break
                m &= m - 1
            if not ok:
                continue
            sel = tuple(comp[i] for i in range(k) if mask >> i & 1)
            w = sum(weights[i] for i in sel)
            proposer_key = tuple(sorted(blocks[i].proposer for i in sel))
            key = (w, len(sel), tuple(-p for p in proposer_key))
            if best_key is None or key > best_key:
                best_key = key
                best_sel = sel
        chosen.extend(best_sel)
    return sorted(chosen)


def _greedy_subset(comp: list[int], blocks: list[Block], weights: list[int],
                   adj: list[set[int]]) -> list[int]:
    order = sorted(comp, key=lambda i: (-weights[i], blocks[i].proposer, blocks[i].hash))
    taken: list[int] = []
    for i in order:
        if not (adj[i] & set(taken)):
            taken.append(i)
    return taken


def build_cblock(tournament_no: int, candidates: list[Block],
                 store: LedgerStore) -> CBlock:
    """Converge one slot's candidate blocks into the best valid CBlock.

    Candidates may reference different parent CBlocks (a fork) and may
    mutually conflict. Per branch the heaviest conflict-free subset is
    taken; the branch whose resulting chain is heaviest wins, with ties
    going to the smaller parent hash.
    """
    pool = [b for b in candidates if b.tournament_no == tournament_no]
    dedup: dict[bytes, Block] = {}
    for b in pool:
        dedup.setdefault(b.hash, b)
    pool = [dedup[h] for h in sorted(dedup)]
    pool = [b for b in pool if b.prev_cblock in store.cblocks]
    if not pool:
        raise EmptySlot(f"tournament {tournament_no} has no usable candidates")

    groups: dict[bytes, list[Block]] = {}
    for b in pool:
        groups.setdefault(b.prev_cblock, []).append(b)

    best = None
    for prev in sorted(groups):
        blocks = groups[prev]
        weights = [block_weight(b.hash, store) for b in blocks]
        picked = _best_subset(blocks, weights)
        if not picked:
            continue
        total = chain_weight(prev, store) + sum(weights[i] for i in picked)
        entry = (total, prev, [blocks[i] for i in picked])
        if best is None or entry[0] > best[0] or (
                entry[0] == best[0] and entry[1] < best[1]):
            best = entry
    if best is None:
        raise EmptySlot(f"tournament {tournament_no} yielded no includable block")
    _, prev, picked_blocks = best
    return CBlock.create(tournament_no, prev, [b.hash for b in picked_blocks])


def validate_cblock(cblock: CBlock, store: LedgerStore) -> bool:
    """Check the three structural rules against fully known blocks."""
    if cblock.prev_cblock not in store.cblocks:
        return False
    if not cblock.included or list(cblock.included) != sorted(cblock.included):
        return False
    blocks = []
    for h in cblock.included:
        blk = store.blocks.get(h)
        if blk is None:
            return False
        blocks.append(blk)
    buckets = [b.bucket_id for b in blocks]
    if len(set(buckets)) != len(buckets):
        return False
    for b in blocks:
        if b.prev_cblock != cblock.prev_cblock:
            return False
        if b.tournament_no != cblock.tournament_no:
            return False
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            if conflicts(blocks[i], blocks[j]) is not ConflictKind.NONE:
                return False
    return True


def validate_block(block: Block, store: LedgerStore, config) -> list[Violation]:
    """All violated block rules; an empty list means the block is valid."""
    out: list[Violation] = []
    parent_known = block.prev_cblock in store.cblocks
    if not parent_known:
        out.append(Violation.UNKNOWN_PARENT)

    for h in block.txs:
        if bucket_of(h, config.b) != block.bucket_id:
            out.append(Violation.BUCKET_MISMATCH)
            break

    used: set[bytes] = set()
    for h in block.txs:
        tx = store.txs.get(h)
        refs = tx.inputs if tx is not None else frozenset()
        if refs & used:
            out.append(Violation.INTERNAL_CONFLICT)
            break
        used.update(refs)

    if parent_known:
        spent = store.spent_inputs_upto(block.prev_cblock)
        seen = store.txs_upto(block.prev_cblock)
        if (block.input_refs & spent) or (block.tx_set & seen):
            out.append(Violation.ANCESTOR_DOUBLE_SPEND)

    powin = block.powin
    if powin is None or not _powin_structurally_ok(powin, block, store.alpha):
        out.append(Violation.BAD_POWIN)

    if block.byte_size > config.block_size_bytes:
        out.append(Violation.OVERSIZE)
    return out


def _powin_structurally_ok(powin, block: Block, alpha: int) -> bool:
    if powin.round != alpha or powin.winner != block.proposer:
        return False
    if powin.tournament_no != block.tournament_no:
        return False
    return powin.verify_tag()


def total_order(tip: bytes, store: LedgerStore) -> list[bytes]:
    """Every block on the path genesis -> tip, slot by slot, hash order inside a slot."""
    order: list[bytes] = []
    for cb in store.chain_to_genesis(tip):
        order.extend(cb.included)
    return order


def _locate(block_hash: bytes, path: list[CBlock]) -> int:
    for idx, cb in enumerate(path):
        if block_hash in cb.included:
            return idx
    raise NotInChain(f"block {block_hash.hex()[:12]} not in ancestry of tip")


def full_confirmations(block_hash: bytes, tip: bytes, store: LedgerStore,
                       delta: int) -> tuple[int, int]:
    """(full confirmations, tournaments spanned) for a block at a tip.

    A block collects one full confirmation per `delta` blocks in strictly
    later CBlocks on the path to the tip; same-slot siblings do not count.
    """
    if delta < 1:
        raise InvalidParameter(f"delta must be >= 1, got {delta}")
    path = store.chain_to_genesis(tip)
    idx = _locate(block_hash, path)
    ahead = sum(len(cb.included) for cb in path[idx + 1:])
    spanned = path[-1].tournament_no - path[idx].tournament_no
    return ahead // delta, spanned


def is_confirmed(block_hash: bytes, tip: bytes, store: LedgerStore,
                 delta: int, f_min: int) -> bool:
    """Confirmed iff x full confirmations arrived within fewer than 2x tournaments.

    The best witness is x = the full count itself, since the slack 2x
    grows with x.
    """
    count, spanned = full_confirmations(block_hash, tip, store, delta)
    return count >= f_min and spanned < 2 * count


def export_ledger_json(store: LedgerStore) -> dict:
    """Ledger dump with hex-encoded hashes; stable field names."""
    blocks = []
    for h in sorted(store.blocks):
        b = store.blocks[h]
        blocks.append({
            "hash": h.hex(),
            "prev_cblock": b.prev_cblock.hex(),
            "bucket_id": b.bucket_id,
            "tournament_no": b.tournament_no,
            "proposer": b.proposer,
            "byte_size": b.byte_size,
            "txs": [t.hex() for t in b.txs],
            "fouls": store.fouls.get(h, 0),
        })
    cblocks = []
    for h in sorted(store.cblocks):
        cb = store.cblocks[h]
        cblocks.append({
            "hash": h.hex(),
            "tournament_no": cb.tournament_no,
            "prev_cblock": cb.prev_cblock.hex(),
            "included": [x.hex() for x in cb.included],
        })
    edges = []
    for cb in cblocks:
        if cb["hash"] != store.genesis.hex():
            edges.append({"kind": "prev", "src": cb["hash"], "dst": cb["prev_cblock"]})
        for inc in cb["included"]:
            edges.append({"kind": "include", "src": cb["hash"], "dst": inc})
    for b in blocks:
        edges.append({"kind": "prev", "src": b["hash"], "dst": b["prev_cblock"]})
    return {
        "genesis": store.genesis.hex(),
        "blocks": blocks,
        "cblocks": cblocks,
        "edges": edges,
    }


def export_ledger_dot(store: LedgerStore) -> str:
    """Graphviz rendering: CBlock layer boxes between block ellipses."""
    lines = ["digraph cdag {", "  rankdir=BT;"]
    for h in sorted(store.cblocks):
        cb = store.cblocks[h]
        label = f"C{cb.tournament_no}\\n{h.hex()[:8]}"
        lines.append(f'  "c_{h.hex()}" [shape=box,label="{label}"];')
    for h in sorted(store.blocks):
        b = store.blocks[h]
        label = f"b{b.bucket_id}/p{b.proposer}\\n{h.hex()[:8]}"
        lines.append(f'  "b_{h.hex()}" [shape=ellipse,label="{label}"];')
    for h in sorted(store.cblocks):
        cb = store.cblocks[h]
        if h != store.genesis:
            lines.append(f'  "c_{h.hex()}" -> "c_{cb.prev_cblock.hex()}" [style=bold];')
        for inc in cb.included:
            lines.append(f'  "c_{h.hex()}" -> "b_{inc.hex()}" [style=dashed];')
    for h in sorted(store.blocks):
        b = store.blocks[h]
        lines.append(f'  "b_{h.hex()}" -> "c_{b.prev_cblock.hex()}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
