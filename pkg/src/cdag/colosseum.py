"""Tournament election primitives: matches, win certificates, keepers, fouls.

Nodes pair up for knockout rounds; a deterministically placed validator
compares the two game proposals and mints a tamper-evident PoWin. Keepers
replicate each player's per-round state and vote against unauthorized
play; more than two thirds of negative keeper votes condemns a match as a
foul, which costs the offender's block one weight unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

from .barrier import BarrierCertificate
from .errors import NotInSlot
from .hashing import ZERO_HASH, digest

ROUND_ENTRY = ZERO_HASH


class TournamentStatus(Enum):
    IDLE = "idle"
    SEEKING = "seeking"
    AWAITING_VALIDATOR = "awaiting_validator"
    QUALIFIED = "qualified"
    ELIMINATED = "eliminated"


@dataclass(frozen=True, slots=True)
class PoWin:
    """Certificate that `winner` won one round of one match."""

    match_id: bytes
    tournament_no: int
    round: int
    players: tuple[int, int]
    winner: int
    validator: int
    prev_powin_hashes: tuple[bytes, bytes]
    auth_tag: bytes

    @staticmethod
    def create(match_id: bytes, tournament_no: int, round_no: int,
               players: tuple[int, int], winner: int, validator: int,
               prev_powin_hashes: tuple[bytes, bytes]) -> "PoWin":
        tag = _powin_tag(match_id, tournament_no, round_no, players, winner,
                         validator, prev_powin_hashes)
        return PoWin(match_id, tournament_no, round_no, players, winner,
                     validator, prev_powin_hashes, tag)

    def verify_tag(self) -> bool:
        if self.winner not in self.players:
            return False
        return self.auth_tag == _powin_tag(
            self.match_id, self.tournament_no, self.round, self.players,
            self.winner, self.validator, self.prev_powin_hashes)

    def loser(self) -> int:
        a, b = self.players
        return b if self.winner == a else a


def _powin_tag(match_id, tournament_no, round_no, players, winner, validator,
               prev_hashes) -> bytes:
    return digest("powin", match_id, tournament_no, round_no, players[0],
                  players[1], winner, validator, prev_hashes[0], prev_hashes[1])


def match_id_for(tournament_no: int, round_no: int, a: int, b: int) -> bytes:
    lo, hi = min(a, b), max(a, b)
    return digest("match", tournament_no, round_no, lo, hi)


def make_game_proposal(node_id: int, match_id: bytes,
                       barrier_cert: Optional[BarrierCertificate]) -> bytes:
    """Deterministic, slot-bound game proposal for one player of a match.

    Binding the barrier certificate hash makes the proposal unpredictable
    before the slot's certificate exists, so outcomes cannot be
    precomputed across slots.
    """
    if barrier_cert is None:
        raise NotInSlot(f"node {node_id} holds no certificate for this slot")
    return digest("proposal", match_id, node_id, barrier_cert.cert_hash)


def validator_for(match_id: bytes, ring) -> int:
    """Ring successor of the match key; identical for both players."""
    return ring.lookup(digest(match_id, "validator"))


def decide_winner(players: tuple[int, int], proposals: tuple[bytes, bytes]) -> int:
    """Numerically larger proposal wins; the vanishing tie goes to the smaller id."""
    a, b = players
    pa, pb = proposals
    if pa > pb:
        return a
    if pb > pa:
        return b
    return min(a, b)


def adjudicate(validator: int, match_id: bytes, tournament_no: int,
               round_no: int, players: tuple[int, int],
               proposals: tuple[bytes, bytes],
               prev_powin_hashes: tuple[bytes, bytes]) -> PoWin:
    """Build the PoWin for a match from both players' verified proposals."""
    winner = decide_winner(players, proposals)
    return PoWin.create(match_id, tournament_no, round_no, players, winner,
                        validator, prev_powin_hashes)


def keepers_for(player: int, tournament_no: int, k: int, ring) -> list[int]:
    """K distinct ring members responsible for one player's tournament state."""
    keepers: list[int] = []
    seen = {player}
    i = 0
    while len(keepers) < k:
        node = ring.lookup(digest("keeper", player, tournament_no, i))
        i += 1
        if node in seen:
            continue
        seen.add(node)
        keepers.append(node)
        if i > 64 * k + ring.n:
            break
    return keepers


@dataclass(slots=True)
class KeeperRecord:
    """One keeper's view of one player's progress through a tournament."""

    subject: int
    tournament_no: int
    stored_powins: dict[int, PoWin] = field(default_factory=dict)
    extra_powins: dict[int, list[PoWin]] = field(default_factory=dict)
    votes_cast: dict[bytes, bool] = field(default_factory=dict)

    def observe(self, powin: PoWin) -> Optional[tuple[PoWin, PoWin]]:
        """Store a certificate; returns the conflicting pair on a duplicate round."""
        held = self.stored_powins.get(powin.round)
        if held is None:
            self.stored_powins[powin.round] = powin
            return None
        if held.auth_tag == powin.auth_tag:
            return None
        self.extra_powins.setdefault(powin.round, []).append(powin)
        return (held, powin)

    def round_outcomes(self, round_no: int) -> list[PoWin]:
        out = [p for p in (self.stored_powins.get(round_no),) if p is not None]
        out.extend(self.extra_powins.get(round_no, ()))
        return out


class VoteReason(Enum):
    MULTI_PLAY = "multi_play"
    NO_PRIOR_WIN = "no_prior_win"
    UNPROVOKED = "unprovoked"


def keeper_verify(record: KeeperRecord, powin: PoWin) -> tuple[bool, Optional[VoteReason]]:
    """Decide a keeper's vote on a freshly observed certificate.

    Negative when the subject demonstrably played the round more than once
    without winning every sitting, or when the keeper's record shows no
    win for the previous round. Round 1 has no ancestry to check.
    """
    subject = record.subject
    outcomes = record.round_outcomes(powin.round)
    if len(outcomes) > 1:
        if not all(p.winner == subject for p in outcomes):
            return False, VoteReason.MULTI_PLAY
    if powin.round > 1:
        prior = record.stored_powins.get(powin.round - 1)
        if prior is None or prior.winner != subject:
            return False, VoteReason.NO_PRIOR_WIN
    return True, None


@dataclass(frozen=True, slots=True)
class FoulNotice:
    match_id: bytes
    subject: int
    tournament_no: int
    negative_votes: int
    total_keepers: int
    evidence: Optional[tuple[PoWin, PoWin]] = None


def tally_fouls(match_id: bytes, subject: int, tournament_no: int,
                negative_votes: int, total_keepers: int) -> Optional[FoulNotice]:
    """Foul iff strictly more than two thirds of the keepers voted against."""
    if total_keepers <= 0:
        return None
    if Fraction(negative_votes, total_keepers) > Fraction(2, 3):
        return FoulNotice(match_id, subject, tournament_no,
                          negative_votes, total_keepers)
    return None


def evidence_proves_foul(evidence: tuple[PoWin, PoWin], subject: int) -> bool:
    """Dual certificates for one round condemn the subject when any sitting was lost.

    A pair of wins is the honest timeout-recovery pattern and is tolerated;
    the player had to win every sitting to proceed anyway.
    """
    a, b = evidence
    if not (a.verify_tag() and b.verify_tag()):
        return False
    if a.auth_tag == b.auth_tag:
        return False
    if a.tournament_no != b.tournament_no or a.round != b.round:
        return False
    if subject not in a.players or subject not in b.players:
        return False
    return a.winner != subject or b.winner != subject


class ValidatorMode(Enum):
    """Byzantine validator behaviors."""

    NO_REPLY = 1
    PLAYERS_ONLY = 2
    KEEPERS_ONLY = 3
    ONE_PLAYER_ONLY = 4
    DELAYED_REPLY = 5


class KeeperMode(Enum):
    """Byzantine keeper behaviors."""

    NO_VERIFY = 1
    NO_STORE = 2
    FALSE_ALERTS = 3
    VOTE_AGAINST_HONEST = 4


class PlayerMode(Enum):
    """Byzantine player behaviors."""

    MULTI_PLAY = 1


@dataclass(frozen=True, slots=True)
class AdversaryProfile:
    """Per-node mask of misbehaviors; empty profile means honest."""

    validator_modes: frozenset[ValidatorMode] = frozenset()
    keeper_modes: frozenset[KeeperMode] = frozenset()
    player_modes: frozenset[PlayerMode] = frozenset()
    bypass_barrier: bool = False

    def is_honest(self) -> bool:
        return (not self.validator_modes and not self.keeper_modes
                and not self.player_modes and not self.bypass_barrier)


HONEST = AdversaryProfile()

# misbehavior used for the malicious-fraction sweeps: drop validator and
# keeper duties entirely but keep playing for block proposals
DUTY_DROPPER = AdversaryProfile(
    validator_modes=frozenset({ValidatorMode.NO_REPLY}),
    keeper_modes=frozenset({KeeperMode.NO_VERIFY, KeeperMode.NO_STORE}),
)
