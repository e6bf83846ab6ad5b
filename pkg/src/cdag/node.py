"""Per-node protocol state machine.

Each simulated node owns a ledger store, a transaction pool, one
tournament context per slot and the keeper records for players it is
responsible for. All handlers run on the simulation's single event loop;
waiting is expressed as scheduled timeout events guarded by tokens so
stale timers are ignored.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from . import colosseum as col
from .barrier import BarrierCertificate, wait_certificate
from .bucketing import Transaction, TxPool, fill_block, remove_confirmed, select_bucket
from .colosseum import (AdversaryProfile, KeeperMode, KeeperRecord, PlayerMode,
                        PoWin, TournamentStatus, ValidatorMode, VoteReason)
from .config import SimConfig
from .errors import EmptySlot, NoTransactions
from .hashing import derive_seed, digest
from .ledger import (Block, CBlock, LedgerStore, Violation, block_weight,
                     build_cblock, chain_weight, select_heaviest_cblock,
                     validate_block, validate_cblock)
from .network import Message, MessageKind

# message payloads -----------------------------------------------------------


@dataclass(slots=True)
class ProbePayload:
    round_no: int
    prev_powin: Optional[PoWin]


@dataclass(slots=True)
class ProbeReplyPayload:
    round_no: int
    accept: bool
    prev_powin: Optional[PoWin] = None
    # on a negative ack: whether the responder could still become eligible
    # for this round, so the prober knows to retry or prune
    retry: bool = True


@dataclass(slots=True)
class ConfirmPayload:
    round_no: int
    go: bool


@dataclass(slots=True)
class ProposalPayload:
    match_id: bytes
    round_no: int
    players: tuple[int, int]
    proposal: bytes
    cert_hash: bytes
    prev_powin_hash: bytes


@dataclass(slots=True)
class VoidPayload:
    match_id: bytes
    round_no: int


@dataclass(slots=True)
class PowinPayload:
    powin: PoWin


@dataclass(slots=True)
class VotePayload:
    match_id: bytes
    subject: int
    round_no: int
    voter: int
    reason: str


@dataclass(slots=True)
class AlertPayload:
    subject: int
    tournament_no: int
    match_id: bytes
    evidence: Optional[tuple[PoWin, PoWin]]


@dataclass(slots=True)
class QueryPayload:
    match_id: bytes
    round_no: int
    players: tuple[int, int]


@dataclass(slots=True)
class SyncPayload:
    request: bool
    cert: Optional[BarrierCertificate] = None


@dataclass(slots=True)
class HeaderPayload:
    block_hash: bytes
    bucket_id: int
    tournament_no: int
    proposer: int
    prev_cblock: bytes
    cblock: Optional[CBlock]


@dataclass(slots=True)
class BodyPayload:
    block: Block
    txs: tuple[Transaction, ...]
    cblock: Optional[CBlock]


# tournament bookkeeping ------------------------------------------------------


@dataclass(slots=True)
class MatchAttempt:
    match_id: bytes
    round_no: int
    opponent: int
    proposal: bytes
    started_at: float
    outcome: Optional[PoWin] = None
    voided: bool = False


@dataclass(slots=True)
class RoundCtx:
    round_no: int
    started_at: float
    attempts: list[MatchAttempt] = field(default_factory=list)


class TournamentCtx:
    """One node's progress through one tournament."""

    __slots__ = ("no", "status", "round_no", "powins", "rounds", "attempt_by_mid",
                 "probes_sent", "outstanding", "probe_order", "probe_idx",
                 "locked_to", "lock_pending", "played", "pruned", "pair_token",
                 "confirm_token", "match_token", "deadline_at")

    def __init__(self, no: int):
        self.no = no
        self.status = TournamentStatus.IDLE
        self.round_no = 0
        self.powins: dict[int, PoWin] = {}
        self.rounds: dict[int, RoundCtx] = {}
        self.attempt_by_mid: dict[bytes, MatchAttempt] = {}
        self.probes_sent = 0
        self.outstanding: set[int] = set()
        self.probe_order: list[int] = []
        self.probe_idx = 0
        self.locked_to: Optional[int] = None
        self.lock_pending = False
        self.played: set[int] = set()
        self.pruned: set[int] = set()
        self.pair_token = 0
        self.confirm_token = 0
        self.match_token = 0
        self.deadline_at = 0.0

    def sitting(self) -> Optional[MatchAttempt]:
        ctx = self.rounds.get(self.round_no)
        if ctx and ctx.attempts:
            return ctx.attempts[-1]
        return None


@dataclass(slots=True)
class ValidatorCtx:
    match_id: bytes
    tournament_no: int
    round_no: int
    players: tuple[int, int]
    proposals: dict[int, tuple[bytes, bytes, bytes]] = field(default_factory=dict)
    done: bool = False
    token: int = 0


# consensus-machinery kinds subject to the one-slot tolerance rule
_SLOT_FILTERED = {
    MessageKind.PAIR_PROBE, MessageKind.PAIR_REPLY, MessageKind.PAIR_CONFIRM,
    MessageKind.GAME_PROPOSAL, MessageKind.MATCH_VOID, MessageKind.KEEPER_QUERY,
    MessageKind.POWIN, MessageKind.KEEPER_REPLY,
}


class ProtocolNode:
    def __init__(self, node_id: int, sim, profile: AdversaryProfile):
        self.id = node_id
        self.sim = sim
        self.cfg: SimConfig = sim.cfg
        self.profile = profile
        self.rng = random.Random(derive_seed(self.cfg.seed, "node", node_id))
        self.store = LedgerStore(self.cfg.alpha)
        self.pool = TxPool(self.cfg.b)
        self.cert: Optional[BarrierCertificate] = None
        self.skew = 0.0
        self.drift = 0.0
        self.slot = 0
        self.tstate = TournamentCtx(0)
        self.seen: set[bytes] = set()
        self.pending_blocks: dict[bytes, list] = {}
        self.pending_cblocks: dict[bytes, list] = {}
        self.candidate_blocks: dict[bytes, Block] = {}
        self.blocks_by_origin: dict[tuple[int, int], set[bytes]] = {}
        self.keeper_records: dict[tuple[int, int], KeeperRecord] = {}
        self.vote_tallies: dict[tuple[bytes, int], set[int]] = {}
        self.fouled: set[tuple[bytes, int]] = set()
        self.fouls_by_origin: dict[tuple[int, int], set[bytes]] = {}
        self.announced: dict[int, set[int]] = {}
        self.validator_ctx: dict[bytes, ValidatorCtx] = {}
        self.main_tip = self.store.genesis
        self.latched: dict[bytes, float] = {}
        self.latched_cblocks: set[bytes] = set()
        self.hygiene_done: set[bytes] = set()
        self.later_slot_count = 0
        self.resync_inflight = False

    # --- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        cfg = self.cfg
        skew_rng = random.Random(derive_seed(cfg.seed, "skew", self.id))
        self.skew = skew_rng.uniform(-cfg.skew_bound_ms, cfg.skew_bound_ms) / 1000.0
        self.drift = skew_rng.uniform(0.0, cfg.drift_ms_per_slot) / 1000.0
        self.cert = self.sim.oracle.genesis
        self._schedule_next_release()

    def _schedule_next_release(self) -> None:
        cfg = self.cfg
        t_next = self.cert.tournament_no + 1
        if t_next > cfg.duration_slots + cfg.drain_slots:
            return
        tau = cfg.tau * 0.25 if self.profile.bypass_barrier else cfg.tau
        skew = self.skew + t_next * self.drift
        nxt = wait_certificate(self.id, self.cert, tau, skew)
        self.sim.at(nxt.issued_at, self._on_slot_start, nxt)

    def _on_slot_start(self, cert: BarrierCertificate) -> None:
        if cert.tournament_no <= self.slot:
            return  # a resync superseded this release chain
        self.cert = cert
        self.slot = cert.tournament_no
        self.tstate = TournamentCtx(self.slot)
        self.announced.setdefault(self.slot, set())
        self._evict_stale(self.sim.now)
        if self.slot <= self.cfg.duration_slots:
            self._begin_round(1)
        self._schedule_next_release()

    def _evict_stale(self, now: float) -> None:
        horizon = now - self.cfg.pending_eviction_slots * self.cfg.tau
        for table in (self.pending_blocks, self.pending_cblocks):
            for key in list(table):
                kept = [e for e in table[key] if e[0] >= horizon]
                if kept:
                    table[key] = kept
                else:
                    del table[key]
        old = self.slot - 3
        for key in [k for k in self.keeper_records if k[1] < old]:
            del self.keeper_records[key]
        for key in [k for k in self.announced if k < old]:
            del self.announced[key]
        for mid in [m for m, ctx in self.validator_ctx.items()
                    if ctx.tournament_no < old]:
            del self.validator_ctx[mid]
        stale_candidates = [h for h, b in self.candidate_blocks.items()
                            if b.tournament_no < self.slot - 4]
        for h in stale_candidates:
            del self.candidate_blocks[h]

    # --- messaging helpers ---------------------------------------------------

    def send(self, dst: int, kind: MessageKind, payload,
             tournament_no: Optional[int] = None, byte_size: int = 0) -> None:
        self.sim.send_direct(self.id, dst, kind, payload,
                             self.slot if tournament_no is None else tournament_no,
                             byte_size)

    def gossip(self, kind: MessageKind, payload, key: bytes,
               tournament_no: Optional[int] = None, byte_size: int = 0) -> None:
        self.sim.gossip_from(self.id, kind, payload, key,
                             self.slot if tournament_no is None else tournament_no,
                             byte_size)

    def on_message(self, msg: Message) -> None:
        if msg.gossip_key:
            if msg.gossip_key in self.seen:
                return
            self.seen.add(msg.gossip_key)
            self.sim.forward_gossip(self.id, msg)

        if msg.tournament_no > self.slot + 1:
            self.later_slot_count += 1
            if (self.later_slot_count >= self.cfg.resync_threshold
                    and not self.resync_inflight):
                self.resync_inflight = True
                self.send(-1, MessageKind.BARRIER_SYNC, SyncPayload(request=True))
        if msg.kind in _SLOT_FILTERED and abs(msg.tournament_no - self.slot) > 1:
            if msg.kind is MessageKind.PAIR_PROBE:
                self.send(msg.origin, MessageKind.PAIR_REPLY,
                          ProbeReplyPayload(msg.payload.round_no, False, retry=False),
                          tournament_no=msg.tournament_no)
            return

        handler = self._HANDLERS[msg.kind]
        handler(self, msg)

    # --- pairing -------------------------------------------------------------

    def _begin_round(self, round_no: int) -> None:
        ts = self.tstate
        ts.round_no = round_no
        ts.status = TournamentStatus.SEEKING
        ts.rounds[round_no] = RoundCtx(round_no, self.sim.now)
        ts.probes_sent = 0
        ts.outstanding = set()
        ts.locked_to = None
        ts.lock_pending = False
        ts.pruned = set()
        ts.pair_token += 1
        self._shuffle_probe_order()
        ts.deadline_at = self.sim.now + self.cfg.pairing_deadline_frac * self.cfg.tau
        self.sim.at(ts.deadline_at, self._on_pairing_deadline, ts.no, round_no)
        self._send_next_probes()

    def _shuffle_probe_order(self) -> None:
        ts = self.tstate
        others = [p for p in range(self.cfg.n)
                  if p != self.id and p not in ts.played and p not in ts.pruned]
        ts.probe_order = self.rng.sample(others, len(others))
        ts.probe_idx = 0

    def _resume_seeking(self, fresh_deadline: bool = False) -> None:
        """Re-enter pairing for the same round after an abort or voided match.

        The pairing window extends as long as probe budget and slot time
        remain; the budget, not the first deadline, bounds total effort.
        """
        ts = self.tstate
        ts.status = TournamentStatus.SEEKING
        ts.outstanding = set()
        ts.locked_to = None
        ts.lock_pending = False
        ts.pair_token += 1
        if fresh_deadline or self.sim.now >= ts.deadline_at - 1e-9:
            slot_end = self.sim.oracle.slot_start(ts.no + 1)
            out_of_time = self.sim.now + 0.15 * self.cfg.tau >= slot_end
            if not fresh_deadline and (
                    ts.probes_sent >= self.cfg.effective_probe_budget()
                    or out_of_time):
                self._sit_out()
                return
            ts.deadline_at = self.sim.now + self.cfg.pairing_deadline_frac * self.cfg.tau
            self.sim.at(ts.deadline_at, self._on_pairing_deadline, ts.no, ts.round_no)
        self._send_next_probes()

    def _send_next_probes(self) -> None:
        ts = self.tstate
        cfg = self.cfg
        budget = cfg.effective_probe_budget()
        prev = ts.powins.get(ts.round_no - 1)
        while (ts.status is TournamentStatus.SEEKING
               and not ts.lock_pending
               and len(ts.outstanding) < cfg.probe_pipeline
               and ts.probes_sent < budget
               and ts.probe_idx < len(ts.probe_order)):
            target = ts.probe_order[ts.probe_idx]
            ts.probe_idx += 1
            if target in ts.played or target in ts.outstanding:
                continue
            ts.probes_sent += 1
            ts.outstanding.add(target)
            self.send(target, MessageKind.PAIR_PROBE,
                      ProbePayload(ts.round_no, prev))
            self.sim.at(self.sim.now + cfg.probe_retry_s, self._on_probe_timeout,
                        ts.no, ts.round_no, target, ts.pair_token)
        if (ts.status is TournamentStatus.SEEKING and not ts.lock_pending
                and not ts.outstanding):
            if ts.probes_sent >= budget or not ts.probe_order:
                self._sit_out()
            elif ts.probe_idx >= len(ts.probe_order):
                # peers may unlock as their own handshakes fail; retry the
                # whole candidate cycle after a short pause
                self.sim.at(self.sim.now + cfg.probe_retry_s / 2,
                            self._restart_probe_cycle, ts.no, ts.round_no,
                            ts.pair_token)

    def _restart_probe_cycle(self, t: int, round_no: int, token: int) -> None:
        ts = self.tstate
        if ts.no != t or ts.round_no != round_no or token != ts.pair_token:
            return
        if ts.status is not TournamentStatus.SEEKING or ts.lock_pending:
            return
        self._shuffle_probe_order()
        self._send_next_probes()

    def _sit_out(self) -> None:
        ts = self.tstate
        if ts.status is TournamentStatus.SEEKING:
            ts.status = TournamentStatus.ELIMINATED
            self.sim.trace_event("sit_out", self.id, ts.no, ts.round_no)

    def _on_pairing_deadline(self, t: int, round_no: int) -> None:
        ts = self.tstate
        if ts.no != t or ts.round_no != round_no:
            return
        if self.sim.now + 1e-9 < ts.deadline_at:
            return
        if ts.status is not TournamentStatus.SEEKING:
            return
        if ts.lock_pending:
            # a handshake is in flight; give it the confirm window
            self.sim.at(self.sim.now + 2 * self.cfg.probe_retry_s,
                        self._on_pairing_deadline, t, round_no)
            return
        slot_end = self.sim.oracle.slot_start(ts.no + 1)
        still_active = (ts.probes_sent < self.cfg.effective_probe_budget()
                        and (ts.outstanding or ts.probe_order)
                        and self.sim.now + 0.15 * self.cfg.tau < slot_end)
        if still_active:
            ts.deadline_at = self.sim.now + self.cfg.pairing_deadline_frac * self.cfg.tau / 2
            self.sim.at(ts.deadline_at, self._on_pairing_deadline, t, round_no)
            return
        self._sit_out()

    def _on_probe_timeout(self, t: int, round_no: int, target: int, token: int) -> None:
        ts = self.tstate
        if ts.no != t or ts.round_no != round_no or token != ts.pair_token:
            return
        if target in ts.outstanding:
            ts.outstanding.discard(target)
            self._send_next_probes()

    def _eligible_probe(self, msg: Message, p: ProbePayload) -> bool:
        ts = self.tstate
        if msg.tournament_no != self.slot or ts.status is not TournamentStatus.SEEKING:
            return False
        if ts.lock_pending:
            return False
        if p.round_no != ts.round_no or msg.origin in ts.played:
            return False
        if p.round_no > 1:
            prev = p.prev_powin
            if (prev is None or not prev.verify_tag()
                    or prev.winner != msg.origin
                    or prev.round != p.round_no - 1
                    or prev.tournament_no != self.slot):
                return False
        return True

    def _probe_retry_hint(self, msg: Message, p: ProbePayload) -> bool:
        """Could this node still pair for (tournament, round)? Guides re-probing.

        A node mid-match for the same round reports False: it will either
        advance or be eliminated, and in the rare voided-match case it
        re-probes actively itself, so liveness is kept one-directionally.
        """
        ts = self.tstate
        if self.slot == msg.tournament_no - 1:
            return p.round_no == 1
        if self.slot != msg.tournament_no:
            return False
        if ts.status in (TournamentStatus.ELIMINATED, TournamentStatus.QUALIFIED):
            return False
        if ts.round_no < p.round_no:
            return True
        if ts.round_no > p.round_no:
            return False
        return ts.status is TournamentStatus.SEEKING

    def _on_pair_probe(self, msg: Message) -> None:
        p: ProbePayload = msg.payload
        if not self._eligible_probe(msg, p):
            self.send(msg.origin, MessageKind.PAIR_REPLY,
                      ProbeReplyPayload(p.round_no, False,
                                        retry=self._probe_retry_hint(msg, p)),
                      tournament_no=msg.tournament_no)
            return
        ts = self.tstate
        ts.locked_to = msg.origin
        ts.lock_pending = True
        ts.confirm_token += 1
        self.send(msg.origin, MessageKind.PAIR_REPLY,
                  ProbeReplyPayload(ts.round_no, True, ts.powins.get(ts.round_no - 1)))
        self.sim.at(self.sim.now + self.cfg.probe_retry_s * 2,
                    self._on_confirm_timeout, ts.no, ts.round_no, ts.confirm_token)

    def _on_confirm_timeout(self, t: int, round_no: int, token: int) -> None:
        ts = self.tstate
        if ts.no != t or ts.round_no != round_no or token != ts.confirm_token:
            return
        if ts.lock_pending:
            self._resume_seeking(fresh_deadline=False)

    def _on_pair_reply(self, msg: Message) -> None:
        ts = self.tstate
        p: ProbeReplyPayload = msg.payload
        ts.outstanding.discard(msg.origin)
        if not p.accept:
            if not p.retry:
                ts.pruned.add(msg.origin)
            if ts.status is TournamentStatus.SEEKING:
                self._send_next_probes()
            return
        mutual = ts.lock_pending and ts.locked_to == msg.origin
        if (ts.status is not TournamentStatus.SEEKING or p.round_no != ts.round_no
                or msg.tournament_no != self.slot
                or (ts.lock_pending and not mutual)):
            self.send(msg.origin, MessageKind.PAIR_CONFIRM,
                      ConfirmPayload(p.round_no, False))
            return
        if p.round_no > 1:
            prev = p.prev_powin
            if (prev is None or not prev.verify_tag() or prev.winner != msg.origin
                    or prev.round != p.round_no - 1):
                self.send(msg.origin, MessageKind.PAIR_CONFIRM,
                          ConfirmPayload(p.round_no, False))
                self._send_next_probes()
                return
        self.send(msg.origin, MessageKind.PAIR_CONFIRM, ConfirmPayload(p.round_no, True))
        self._start_match(msg.origin)

    def _on_pair_confirm(self, msg: Message) -> None:
        ts = self.tstate
        p: ConfirmPayload = msg.payload
        if ts.locked_to != msg.origin or p.round_no != ts.round_no:
            return
        if not p.go:
            if ts.lock_pending:
                self._resume_seeking()
            return
        sitting = ts.sitting()
        if sitting is None or sitting.opponent != msg.origin or sitting.voided:
            self._start_match(msg.origin)

    # --- the match itself ----------------------------------------------------

    def _start_match(self, opponent: int) -> None:
        ts = self.tstate
        ts.locked_to = opponent
        ts.lock_pending = False
        ts.played.add(opponent)
        mid = col.match_id_for(ts.no, ts.round_no, self.id, opponent)
        proposal = col.make_game_proposal(self.id, mid, self.cert)
        attempt = MatchAttempt(mid, ts.round_no, opponent, proposal, self.sim.now)
        ts.rounds[ts.round_no].attempts.append(attempt)
        ts.attempt_by_mid[mid] = attempt
        ts.status = TournamentStatus.AWAITING_VALIDATOR
        ts.match_token += 1
        prev = ts.powins.get(ts.round_no - 1)
        prev_hash = prev.auth_tag if prev else col.ROUND_ENTRY
        players = (min(self.id, opponent), max(self.id, opponent))
        validator = self.sim.validator_for(mid)
        self.send(validator, MessageKind.GAME_PROPOSAL,
                  ProposalPayload(mid, ts.round_no, players, proposal,
                                  self.cert.cert_hash, prev_hash))
        self.sim.at(self.sim.now + self.cfg.validator_wait_frac * self.cfg.tau,
                    self.handle_validator_timeout, ts.no, mid, ts.match_token)

    def _on_game_proposal(self, msg: Message) -> None:
        p: ProposalPayload = msg.payload
        ctx = self.validator_ctx.get(p.match_id)
        if ctx is None:
            ctx = ValidatorCtx(p.match_id, msg.tournament_no, p.round_no, p.players)
            self.validator_ctx[p.match_id] = ctx
            ctx.token += 1
            self.sim.at(self.sim.now + self.cfg.proposal_wait_frac * self.cfg.tau,
                        self._on_proposal_wait_timeout, p.match_id, ctx.token)
        if ctx.done or msg.origin not in p.players:
            return
        expected = digest("proposal", p.match_id, msg.origin, p.cert_hash)
        if expected != p.proposal:
            ctx.done = True
            for player in p.players:
                self.send(player, MessageKind.MATCH_VOID,
                          VoidPayload(p.match_id, p.round_no),
                          tournament_no=ctx.tournament_no)
            return
        ctx.proposals[msg.origin] = (p.proposal, p.cert_hash, p.prev_powin_hash)
        if len(ctx.proposals) == 2:
            ctx.done = True
            self._adjudicate_and_send(ctx)

    def _on_proposal_wait_timeout(self, match_id: bytes, token: int) -> None:
        ctx = self.validator_ctx.get(match_id)
        if ctx is None or ctx.done or ctx.token != token:
            return
        ctx.done = True
        for player in ctx.players:
            self.send(player, MessageKind.MATCH_VOID,
                      VoidPayload(match_id, ctx.round_no),
                      tournament_no=ctx.tournament_no)

    def _adjudicate_and_send(self, ctx: ValidatorCtx) -> None:
        a, b = ctx.players
        pa, pb = ctx.proposals[a][0], ctx.proposals[b][0]
        powin = col.adjudicate(self.id, ctx.match_id, ctx.tournament_no,
                               ctx.round_no, ctx.players, (pa, pb),
                               (ctx.proposals[a][2], ctx.proposals[b][2]))
        self.sim.trace_event("powin", self.id, ctx.tournament_no, ctx.round_no,
                             powin.winner, powin.auth_tag.hex()[:12])
        modes = self.profile.validator_modes
        if not modes:
            self._send_powin(powin, players=True, keepers=True)
            return
        mode = sorted(modes, key=lambda m: m.value)[
            self.rng.randrange(len(modes))]
        if mode is ValidatorMode.NO_REPLY:
            return
        if mode is ValidatorMode.PLAYERS_ONLY:
            self._send_powin(powin, players=True, keepers=False)
        elif mode is ValidatorMode.KEEPERS_ONLY:
            self._send_powin(powin, players=False, keepers=True)
        elif mode is ValidatorMode.ONE_PLAYER_ONLY:
            lucky = ctx.players[self.rng.randrange(2)]
            self.send(lucky, MessageKind.POWIN, PowinPayload(powin),
                      tournament_no=ctx.tournament_no)
        elif mode is ValidatorMode.DELAYED_REPLY:
            delay = 1.5 * self.cfg.validator_wait_frac * self.cfg.tau
            self.sim.at(self.sim.now + delay, self._send_powin, powin, True, True)

    def _send_powin(self, powin: PoWin, players: bool, keepers: bool) -> None:
        if players:
            for player in powin.players:
                self.send(player, MessageKind.POWIN, PowinPayload(powin),
                          tournament_no=powin.tournament_no)
        if keepers:
            m = -(-self.cfg.k // self.cfg.keeper_fanout_div)
            for player in powin.players:
                ks = self.sim.keepers_for(player, powin.tournament_no)
                for keeper in self.rng.sample(ks, min(m, len(ks))):
                    self.send(keeper, MessageKind.POWIN, PowinPayload(powin),
                              tournament_no=powin.tournament_no)

    # --- result handling (player side) ---------------------------------------

    def _on_powin(self, msg: Message) -> None:
        powin: PoWin = msg.payload.powin
        if not powin.verify_tag():
            return
        if self.id in powin.players:
            self._player_receives_result(powin)
        self._keeper_observes(powin, forward=True)

    def _player_receives_result(self, powin: PoWin) -> None:
        ts = self.tstate
        if powin.tournament_no != ts.no:
            return
        attempt = ts.attempt_by_mid.get(powin.match_id)
        if attempt is None or attempt.outcome is not None:
            return
        attempt.outcome = powin
        self._forward_to_own_keepers(powin)
        current = ts.sitting()
        if (ts.status is TournamentStatus.AWAITING_VALIDATOR
                and current is attempt and ts.round_no == powin.round):
            self._resolve_round(powin)
        else:
            self._resolve_late(attempt, powin)

    def _forward_to_own_keepers(self, powin: PoWin) -> None:
        m = -(-self.cfg.k // self.cfg.keeper_fanout_div)
        ks = self.sim.keepers_for(self.id, powin.tournament_no)
        for keeper in self.rng.sample(ks, min(m, len(ks))):
            self.send(keeper, MessageKind.POWIN, PowinPayload(powin),
                      tournament_no=powin.tournament_no)

    def _known_loss_this_round(self, round_no: int) -> bool:
        ctx = self.tstate.rounds.get(round_no)
        if not ctx:
            return False
        return any(a.outcome is not None and a.outcome.winner != self.id
                   for a in ctx.attempts)

    def _resolve_round(self, powin: PoWin) -> None:
        ts = self.tstate
        ts.match_token += 1  # cancels the validator timeout
        round_ctx = ts.rounds[ts.round_no]
        self.sim.record_round_time(ts.no, ts.round_no,
                                   self.sim.now - round_ctx.started_at)
        if powin.winner == self.id and not self._known_loss_this_round(ts.round_no):
            ts.powins[powin.round] = powin
            if powin.round >= self.cfg.alpha:
                ts.status = TournamentStatus.QUALIFIED
                self.sim.record_qualified(ts.no, self.id)
                self.qualify_and_propose()
            else:
                self._begin_round(powin.round + 1)
        else:
            if (PlayerMode.MULTI_PLAY in self.profile.player_modes
                    and len(round_ctx.attempts) < 3):
                self._resume_seeking(fresh_deadline=True)
            else:
                ts.status = TournamentStatus.ELIMINATED

    def _resolve_late(self, attempt: MatchAttempt, powin: PoWin) -> None:
        """A result surfaced after a timeout already moved us on.

        Forward progress is only legitimate when every sitting of the
        round was won; a surfaced loss stops the tournament here.
        """
        ts = self.tstate
        if powin.winner != self.id:
            if PlayerMode.MULTI_PLAY in self.profile.player_modes:
                return
            if ts.status is not TournamentStatus.ELIMINATED:
                ts.status = TournamentStatus.ELIMINATED
                ts.match_token += 1
                ts.pair_token += 1
                self.sim.trace_event("late_loss_stop", self.id, ts.no, powin.round)
        else:
            if (ts.status is TournamentStatus.SEEKING
                    and ts.round_no == powin.round
                    and not self._known_loss_this_round(powin.round)):
                self._resolve_round(powin)

    def handle_validator_timeout(self, t: int, match_id: bytes, token: int) -> None:
        ts = self.tstate
        if ts.no != t or token != ts.match_token:
            return
        attempt = ts.attempt_by_mid.get(match_id)
        if attempt is None or attempt.outcome is not None:
            return
        # ask both players' keepers whether the result exists
        m = -(-self.cfg.k // self.cfg.keeper_fanout_div)
        payload = QueryPayload(match_id, attempt.round_no,
                               (min(self.id, attempt.opponent),
                                max(self.id, attempt.opponent)))
        for subject in (self.id, attempt.opponent):
            ks = self.sim.keepers_for(subject, ts.no)
            for keeper in self.rng.sample(ks, min(m, len(ks))):
                self.send(keeper, MessageKind.KEEPER_QUERY, payload)
        self.sim.at(self.sim.now + self.cfg.keeper_query_wait_frac * self.cfg.tau,
                    self._on_keeper_query_timeout, t, match_id, token)

    def _on_keeper_query_timeout(self, t: int, match_id: bytes, token: int) -> None:
        ts = self.tstate
        if ts.no != t or token != ts.match_token:
            return
        attempt = ts.attempt_by_mid.get(match_id)
        if attempt is None or attempt.outcome is not None:
            return
        attempt.voided = True
        slot_end = self.sim.oracle.slot_start(ts.no + 1)
        if self.sim.now + 0.2 * self.cfg.tau < slot_end:
            self._resume_seeking(fresh_deadline=True)
        else:
            ts.status = TournamentStatus.ELIMINATED

    def _on_match_void(self, msg: Message) -> None:
        p: VoidPayload = msg.payload
        ts = self.tstate
        attempt = ts.attempt_by_mid.get(p.match_id)
        if (attempt is None or attempt.outcome is not None
                or ts.status is not TournamentStatus.AWAITING_VALIDATOR
                or ts.sitting() is not attempt):
            return
        attempt.voided = True
        ts.match_token += 1
        self._resume_seeking(fresh_deadline=True)

    def _on_keeper_query(self, msg: Message) -> None:
        if (KeeperMode.NO_VERIFY in self.profile.keeper_modes
                or KeeperMode.NO_STORE in self.profile.keeper_modes):
            return
        p: QueryPayload = msg.payload
        for subject in p.players:
            rec = self.keeper_records.get((subject, msg.tournament_no))
            if rec is None:
                continue
            for powin in rec.round_outcomes(p.round_no):
                if powin.match_id == p.match_id:
                    self.send(msg.origin, MessageKind.KEEPER_REPLY,
                              PowinPayload(powin), tournament_no=msg.tournament_no)
                    return

    def _on_keeper_reply(self, msg: Message) -> None:
        powin: PoWin = msg.payload.powin
        if not powin.verify_tag():
            return
        if self.id in powin.players:
            self._player_receives_result(powin)

    # --- keeper duties --------------------------------------------------------

    def _keeper_observes(self, powin: PoWin, forward: bool) -> None:
        for subject in powin.players:
            keepers = self.sim.keepers_for(subject, powin.tournament_no)
            if self.id not in keepers:
                continue
            if KeeperMode.NO_STORE in self.profile.keeper_modes:
                continue
            rec = self.keeper_records.get((subject, powin.tournament_no))
            if rec is None:
                rec = KeeperRecord(subject, powin.tournament_no)
                self.keeper_records[(subject, powin.tournament_no)] = rec
            fresh_key = digest("kseen", subject, powin.auth_tag)
            if fresh_key in self.seen:
                continue
            self.seen.add(fresh_key)
            conflict = rec.observe(powin)
            if forward:
                fanout = min(self.cfg.keeper_gossip_fanout, len(keepers) - 1)
                peers = [k for k in keepers if k != self.id]
                for peer in self.rng.sample(peers, min(fanout, len(peers))):
                    self.send(peer, MessageKind.POWIN, PowinPayload(powin),
                              tournament_no=powin.tournament_no)
            if conflict is not None and not self.profile.keeper_modes:
                if col.evidence_proves_foul(conflict, subject):
                    self.gossip(MessageKind.FOUL_ALERT,
                                AlertPayload(subject, powin.tournament_no,
                                             powin.match_id, conflict),
                                key=digest("alert", subject, conflict[0].auth_tag,
                                           conflict[1].auth_tag),
                                tournament_no=powin.tournament_no)
            if KeeperMode.FALSE_ALERTS in self.profile.keeper_modes:
                self.gossip(MessageKind.FOUL_ALERT,
                            AlertPayload(powin.loser(), powin.tournament_no,
                                         powin.match_id, None),
                            key=digest("false-alert", self.id, powin.auth_tag),
                            tournament_no=powin.tournament_no)
            self.sim.at(self.sim.now + self.cfg.keeper_vote_delay_frac * self.cfg.tau,
                        self._keeper_vote_due, subject, powin)

    def _keeper_vote_due(self, subject: int, powin: PoWin) -> None:
        if KeeperMode.NO_VERIFY in self.profile.keeper_modes:
            return
        rec = self.keeper_records.get((subject, powin.tournament_no))
        if rec is None:
            return
        if powin.match_id in rec.votes_cast:
            return
        positive, reason = col.keeper_verify(rec, powin)
        if KeeperMode.VOTE_AGAINST_HONEST in self.profile.keeper_modes:
            positive, reason = False, VoteReason.UNPROVOKED
        rec.votes_cast[powin.match_id] = positive
        if not positive:
            self.sim.trace_event("vote", self.id, powin.tournament_no,
                                 powin.round, subject, reason.value)
            self.gossip(MessageKind.KEEPER_VOTE,
                        VotePayload(powin.match_id, subject, powin.round,
                                    self.id, reason.value),
                        key=digest("vote", self.id, subject, powin.match_id),
                        tournament_no=powin.tournament_no)

    def _on_keeper_vote(self, msg: Message) -> None:
        p: VotePayload = msg.payload
        if p.voter not in self.sim.keepers_for(p.subject, msg.tournament_no):
            return
        key = (p.match_id, p.subject)
        tally = self.vote_tallies.setdefault(key, set())
        tally.add(p.voter)
        if key in self.fouled:
            return
        notice = col.tally_fouls(p.match_id, p.subject, msg.tournament_no,
                                 len(tally), self.cfg.k)
        if notice is not None:
            self._apply_foul(p.match_id, p.subject, msg.tournament_no, "votes")

    def _on_foul_alert(self, msg: Message) -> None:
        p: AlertPayload = msg.payload
        if p.evidence is None or not col.evidence_proves_foul(p.evidence, p.subject):
            return
        self._apply_foul(p.match_id, p.subject, p.tournament_no, "evidence")

    def _apply_foul(self, match_id: bytes, subject: int, tournament_no: int,
                    basis: str) -> None:
        key = (match_id, subject)
        if key in self.fouled:
            return
        self.fouled.add(key)
        origin = (subject, tournament_no)
        self.fouls_by_origin.setdefault(origin, set()).add(match_id)
        for block_hash in sorted(self.blocks_by_origin.get(origin, ())):
            self.store.add_foul(block_hash)
        self.sim.trace_foul(match_id, subject, tournament_no, basis, self.id)

    # --- block proposal -------------------------------------------------------

    def qualify_and_propose(self) -> None:
        ts = self.tstate
        if ts.status is not TournamentStatus.QUALIFIED:
            return
        built = self._build_best_cblock()
        if built is not None:
            ref = built.hash
        else:
            ref = select_heaviest_cblock(self.store.tips, self.store)
        self._after_ledger_change()

        txs = self._fill_from_some_bucket(ref)
        if txs is None:
            self.sim.trace_event("silent", self.id, ts.no, 0)
            return
        bucket, chosen = txs
        body_bytes = sum(t.byte_size for t in chosen) + self.cfg.header_bytes
        byte_size = self.cfg.block_size_bytes if self.cfg.pad_blocks else body_bytes
        block = Block.create(ref, bucket, ts.no, self.id,
                             ts.powins[self.cfg.alpha], chosen, byte_size)
        self.store.add_block(block, chosen)
        self.candidate_blocks[block.hash] = block
        self.blocks_by_origin.setdefault((self.id, ts.no), set()).add(block.hash)
        pending_fouls = self.fouls_by_origin.get((self.id, ts.no), ())
        for _ in pending_fouls:
            self.store.add_foul(block.hash)
        self.announced.setdefault(ts.no, set()).add(bucket)
        self.sim.record_emit(block, self.id)

        header = HeaderPayload(block.hash, bucket, ts.no, self.id, ref, built)
        self.gossip(MessageKind.HEADER_ANNOUNCE, header,
                    key=digest("hdr", block.hash), tournament_no=ts.no,
                    byte_size=self.cfg.header_bytes)
        body = BodyPayload(block, tuple(chosen), built)
        self.gossip(MessageKind.BLOCK_BODY, body,
                    key=digest("body", block.hash), tournament_no=ts.no,
                    byte_size=byte_size)

    def _build_best_cblock(self) -> Optional[CBlock]:
        """Converge unreferenced candidate blocks if that beats every known tip."""
        groups: dict[int, list[Block]] = {}
        for h in sorted(self.candidate_blocks):
            blk = self.candidate_blocks[h]
            if blk.tournament_no < self.slot:
                groups.setdefault(blk.tournament_no, []).append(blk)
        best: Optional[tuple[int, CBlock]] = None
        for t in sorted(groups):
            try:
                cb = build_cblock(t, groups[t], self.store)
            except EmptySlot:
                continue
            weight = chain_weight(cb.prev_cblock, self.store)
            weight += sum(block_weight(h, self.store) for h in cb.included)
            if best is None or weight > best[0] or (
                    weight == best[0] and cb.hash < best[1].hash):
                best = (weight, cb)
        if best is None:
            return None
        weight, cb = best
        tip = select_heaviest_cblock(self.store.tips, self.store)
        if weight >= chain_weight(tip, self.store):
            if cb.hash not in self.store.cblocks:
                self.store.add_cblock(cb)
                for h in cb.included:
                    self.candidate_blocks.pop(h, None)
                self.sim.trace_event("cblock", self.id, cb.tournament_no,
                                     len(cb.included))
            return cb
        return None

    def _fill_from_some_bucket(self, ref: bytes):
        spent = self.store.spent_inputs_upto(ref)
        exclude = self.store.txs_upto(ref)
        announced = set(self.announced.get(self.slot, ()))
        tried: set[int] = set()
        for _ in range(self.pool.b):
            try:
                bucket = select_bucket(self.rng, self.pool, announced | tried)
            except NoTransactions:
                return None
            if bucket in tried:
                return None
            tried.add(bucket)
            chosen = fill_block(bucket, self.pool, self.cfg.block_size_bytes,
                                spent, exclude)
            if chosen:
                return bucket, chosen
            if len(tried) >= len(self.pool.non_empty_buckets()):
                return None
        return None

    # --- ledger ingestion -----------------------------------------------------

    def _on_header(self, msg: Message) -> None:
        p: HeaderPayload = msg.payload
        if abs(p.tournament_no - self.slot) <= 1:
            self.announced.setdefault(p.tournament_no, set()).add(p.bucket_id)
        if p.cblock is not None:
            self._try_insert_cblock(p.cblock)

    def _on_block_body(self, msg: Message) -> None:
        p: BodyPayload = msg.payload
        self._try_insert_block(p.block, p.txs)
        if p.cblock is not None:
            self._try_insert_cblock(p.cblock)

    def _try_insert_block(self, block: Block, txs: tuple[Transaction, ...]) -> None:
        if block.hash in self.store.blocks:
            return
        for tx in txs:
            self.store.txs.setdefault(tx.hash, tx)
        violations = validate_block(block, self.store, self.cfg)
        if Violation.UNKNOWN_PARENT in violations:
            others = [v for v in violations if v is not Violation.UNKNOWN_PARENT]
            if not others:
                self.pending_blocks.setdefault(block.prev_cblock, []).append(
                    (self.sim.now, block, txs))
            return
        if violations:
            self.sim.trace_event("reject_block", self.id, block.tournament_no,
                                 violations[0].value)
            return
        self.store.add_block(block, txs)
        self.candidate_blocks[block.hash] = block
        origin = (block.proposer, block.tournament_no)
        self.blocks_by_origin.setdefault(origin, set()).add(block.hash)
        for _ in self.fouls_by_origin.get(origin, ()):
            self.store.add_foul(block.hash)
        self._unpark_cblocks(block.hash)

    def _try_insert_cblock(self, cb: CBlock) -> None:
        if cb.hash in self.store.cblocks:
            return
        missing = []
        if cb.prev_cblock not in self.store.cblocks:
            missing.append(cb.prev_cblock)
        missing.extend(h for h in cb.included if h not in self.store.blocks)
        if missing:
            self.pending_cblocks.setdefault(missing[0], []).append((self.sim.now, cb))
            return
        if not validate_cblock(cb, self.store):
            self.sim.trace_event("reject_cblock", self.id, cb.tournament_no, 0)
            return
        self.store.add_cblock(cb)
        for h in cb.included:
            self.candidate_blocks.pop(h, None)
        self._unpark_blocks(cb.hash)
        self._unpark_cblocks(cb.hash)
        self._after_ledger_change()

    def _unpark_blocks(self, parent_hash: bytes) -> None:
        waiting = self.pending_blocks.pop(parent_hash, ())
        for _, block, txs in waiting:
            self._try_insert_block(block, txs)

    def _unpark_cblocks(self, key: bytes) -> None:
        waiting = self.pending_cblocks.pop(key, ())
        for _, cb in waiting:
            self._try_insert_cblock(cb)

    def _after_ledger_change(self) -> None:
        tip = select_heaviest_cblock(self.store.tips, self.store)
        self.main_tip = tip
        path = self.store.chain_to_genesis(tip)
        total = sum(len(cb.included) for cb in path)
        delta = max(1, self.cfg.n // (2 ** self.cfg.alpha))
        running = 0
        tip_t = path[-1].tournament_no
        now = self.sim.now
        for cb in path:
            running += len(cb.included)
            if cb.hash in self.latched_cblocks:
                if cb.hash not in self.hygiene_done:
                    self._pool_hygiene(cb)
                continue
            if cb.hash not in self.hygiene_done:
                self._pool_hygiene(cb)
            ahead = total - running
            count = ahead // delta
            spanned = tip_t - cb.tournament_no
            if count >= self.cfg.f and spanned < 2 * count:
                self.latched_cblocks.add(cb.hash)
                for h in cb.included:
                    if h not in self.latched:
                        self.latched[h] = now
                        self.sim.record_confirm(self.id, h, now)

    def _pool_hygiene(self, cb: CBlock) -> None:
        self.hygiene_done.add(cb.hash)
        for h in cb.included:
            remove_confirmed(self.pool, self.store.blocks[h])

    def _on_tx(self, msg: Message) -> None:
        self.pool.add(msg.payload)

    def _on_barrier_sync(self, msg: Message) -> None:
        p: SyncPayload = msg.payload
        if p.request or p.cert is None:
            return
        self.resync_inflight = False
        self.later_slot_count = 0
        if p.cert.tournament_no > self.slot:
            self.cert = p.cert
            self.slot = p.cert.tournament_no
            self.tstate = TournamentCtx(self.slot)
            self.tstate.status = TournamentStatus.ELIMINATED
            self.sim.trace_event("resync", self.id, self.slot, 0)
            self._schedule_next_release()

    _HANDLERS = {
        MessageKind.TX_GOSSIP: _on_tx,
        MessageKind.HEADER_ANNOUNCE: _on_header,
        MessageKind.BLOCK_BODY: _on_block_body,
        MessageKind.POWIN: _on_powin,
        MessageKind.KEEPER_VOTE: _on_keeper_vote,
        MessageKind.FOUL_ALERT: _on_foul_alert,
        MessageKind.BARRIER_SYNC: _on_barrier_sync,
        MessageKind.PAIR_PROBE: _on_pair_probe,
        MessageKind.PAIR_REPLY: _on_pair_reply,
        MessageKind.PAIR_CONFIRM: _on_pair_confirm,
        MessageKind.GAME_PROPOSAL: _on_game_proposal,
        MessageKind.MATCH_VOID: _on_match_void,
        MessageKind.KEEPER_QUERY: _on_keeper_query,
        MessageKind.KEEPER_REPLY: _on_keeper_reply,
    }
