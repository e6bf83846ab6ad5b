"""Tournament primitives: proposals, adjudication, keepers, fouls."""

import math
from fractions import Fraction

import pytest

from cdag.barrier import genesis_certificate, wait_certificate
from cdag.colosseum import (KeeperRecord, PoWin, ROUND_ENTRY, VoteReason,
                            adjudicate, decide_winner, evidence_proves_foul,
                            keeper_verify, keepers_for, make_game_proposal,
                            match_id_for, tally_fouls, validator_for)
from cdag.errors import NotInSlot
from cdag.hashing import digest
from cdag.network import RingTable


def _cert(node_id=0):
    return wait_certificate(node_id, genesis_certificate(20.0), 20.0)


def _powin(t=1, rnd=1, players=(1, 2), winner=1, validator=5,
           prev=(ROUND_ENTRY, ROUND_ENTRY), match=None):
    mid = match if match is not None else match_id_for(t, rnd, *players)
    return PoWin.create(mid, t, rnd, players, winner, validator, prev)


class TestGameProposal:
    def test_deterministic(self):
        cert = _cert()
        mid = match_id_for(1, 1, 3, 4)
        a = make_game_proposal(3, mid, cert)
        b = make_game_proposal(3, mid, cert)
        assert a == b

    def test_players_get_distinct_proposals(self):
        cert = _cert()
        mid = match_id_for(1, 1, 3, 4)
        assert make_game_proposal(3, mid, cert) != make_game_proposal(4, mid, cert)

    def test_requires_certificate(self):
        with pytest.raises(NotInSlot):
            make_game_proposal(3, match_id_for(1, 1, 3, 4), None)

    def test_winner_side_is_fair(self):
        cert_a = _cert(0)
        cert_b = _cert(1)
        n = 10_000
        wins_a = 0
        for i in range(n):
            mid = match_id_for(1, 1, 0, 1) + i.to_bytes(4, "big")
            pa = make_game_proposal(0, mid, cert_a)
            pb = make_game_proposal(1, mid, cert_b)
            if decide_winner((0, 1), (pa, pb)) == 0:
                wins_a += 1
        sigma = math.sqrt(n * 0.25)
        assert abs(wins_a - n / 2) < 5 * sigma


class TestValidatorPlacement:
    def test_deterministic_across_replays(self):
        ring = RingTable(64, seed=9)
        mid = match_id_for(3, 2, 10, 20)
        assert validator_for(mid, ring) == validator_for(mid, ring)

    def test_both_players_compute_same_validator(self):
        ring = RingTable(64, seed=9)
        mid_a = match_id_for(3, 2, 10, 20)
        mid_b = match_id_for(3, 2, 20, 10)  # order-independent match id
        assert mid_a == mid_b
        assert validator_for(mid_a, ring) == validator_for(mid_b, ring)

    def test_distribution_roughly_uniform(self):
        n = 64
        ring = RingTable(n, seed=9)
        draws = 10_000
        counts = [0] * n
        for i in range(draws):
            counts[validator_for(digest("match", i), ring)] += 1
        p = 1 / n
        sigma = math.sqrt(draws * p * (1 - p))
        for c in counts:
            assert abs(c - draws * p) < 5 * sigma


class TestAdjudication:
    def test_larger_proposal_wins(self):
        assert decide_winner((3, 4), (b"\x0a" * 32, b"\x0b" * 32)) == 4
        assert decide_winner((3, 4), (b"\x0b" * 32, b"\x0a" * 32)) == 3

    def test_tie_breaks_to_smaller_id(self):
        assert decide_winner((9, 2), (b"\x01" * 32, b"\x01" * 32)) == 2

    def test_replay_produces_identical_bits(self):
        mid = match_id_for(2, 1, 5, 6)
        prev = (ROUND_ENTRY, ROUND_ENTRY)
        made = [adjudicate(9, mid, 2, 1, (5, 6),
                           (b"\x10" * 32, b"\x20" * 32), prev)
                for _ in range(2)]
        assert made[0] == made[1]
        assert made[0].auth_tag == made[1].auth_tag

    def test_tag_tampering_detected(self):
        p = _powin()
        assert p.verify_tag()
        forged = PoWin(p.match_id, p.tournament_no, p.round, p.players,
                       p.loser(), p.validator, p.prev_powin_hashes, p.auth_tag)
        assert not forged.verify_tag()


class TestKeepers:
    def test_sixteen_distinct_keepers(self):
        ring = RingTable(64, seed=4)
        ks = keepers_for(7, 3, 16, ring)
        assert len(ks) == 16
        assert len(set(ks)) == 16
        assert 7 not in ks

    def test_everyone_else_when_k_is_n_minus_one(self):
        n = 10
        ring = RingTable(n, seed=4)
        ks = keepers_for(3, 1, n - 1, ring)
        assert sorted(ks) == [i for i in range(n) if i != 3]

    def test_deterministic_on_every_node(self):
        ring = RingTable(32, seed=4)
        assert keepers_for(5, 2, 16, ring) == keepers_for(5, 2, 16, ring)


class TestKeeperVerify:
    def test_fresh_consistent_powin_is_positive(self):
        rec = KeeperRecord(subject=1, tournament_no=1)
        p = _powin(rnd=1, players=(1, 2), winner=1)
        rec.observe(p)
        ok, reason = keeper_verify(rec, p)
        assert ok and reason is None

    def test_round_two_requires_stored_round_one_win(self):
        rec = KeeperRecord(subject=1, tournament_no=1)
        p2 = _powin(rnd=2, players=(1, 3), winner=1)
        rec.observe(p2)
        ok, reason = keeper_verify(rec, p2)
        assert not ok and reason is VoteReason.NO_PRIOR_WIN

    def test_round_two_after_recorded_loss_is_negative(self):
        rec = KeeperRecord(subject=1, tournament_no=1)
        lost = _powin(rnd=1, players=(1, 2), winner=2)
        rec.observe(lost)
        p2 = _powin(rnd=2, players=(1, 3), winner=1)
        rec.observe(p2)
        ok, reason = keeper_verify(rec, p2)
        assert not ok and reason is VoteReason.NO_PRIOR_WIN

    def test_second_powin_with_a_loss_is_multi_play(self):
        rec = KeeperRecord(subject=1, tournament_no=1)
        first = _powin(rnd=1, players=(1, 2), winner=1)
        rec.observe(first)
        second = _powin(rnd=1, players=(1, 4), winner=4)
        pair = rec.observe(second)
        assert pair == (first, second)
        ok, reason = keeper_verify(rec, second)
        assert not ok and reason is VoteReason.MULTI_PLAY

    def test_double_win_is_tolerated(self):
        # the honest timeout-recovery pattern: both sittings won
        rec = KeeperRecord(subject=1, tournament_no=1)
        rec.observe(_powin(rnd=1, players=(1, 2), winner=1))
        again = _powin(rnd=1, players=(1, 4), winner=1)
        rec.observe(again)
        ok, _ = keeper_verify(rec, again)
        assert ok


class TestFoulTally:
    def test_boundary_eleven_of_sixteen_is_foul(self):
        # oracle: strict fraction comparison
        assert Fraction(11, 16) > Fraction(2, 3)
        assert tally_fouls(b"m", 1, 1, 11, 16) is not None

    def test_boundary_ten_of_sixteen_is_clean(self):
        assert Fraction(10, 16) <= Fraction(2, 3)
        assert tally_fouls(b"m", 1, 1, 10, 16) is None

    def test_unanimous_negative_is_foul(self):
        notice = tally_fouls(b"m", 1, 1, 16, 16)
        assert notice is not None
        assert notice.negative_votes == 16

    def test_no_negatives_is_clean(self):
        assert tally_fouls(b"m", 1, 1, 0, 16) is None

    def test_exact_two_thirds_is_clean(self):
        assert tally_fouls(b"m", 1, 1, 10, 15) is None
        assert tally_fouls(b"m", 1, 1, 11, 15) is not None

    def test_minority_keeper_attack_stays_below_threshold(self):
        # fewer than a third of a 16-keeper set voting falsely cannot foul
        k = 16
        max_minority = (k - 1) // 3
        assert tally_fouls(b"m", 1, 1, max_minority, k) is None


class TestFoulEvidence:
    def test_dual_powin_with_loss_proves_foul(self):
        a = _powin(rnd=1, players=(1, 2), winner=1)
        b = _powin(rnd=1, players=(1, 4), winner=4)
        assert evidence_proves_foul((a, b), subject=1)

    def test_win_win_pair_is_not_evidence(self):
        a = _powin(rnd=1, players=(1, 2), winner=1)
        b = _powin(rnd=1, players=(1, 4), winner=1)
        assert not evidence_proves_foul((a, b), subject=1)

    def test_tampered_certificate_rejected(self):
        a = _powin(rnd=1, players=(1, 2), winner=1)
        bad = PoWin(a.match_id, a.tournament_no, a.round, a.players, 2,
                    a.validator, a.prev_powin_hashes, a.auth_tag)
        b = _powin(rnd=1, players=(1, 4), winner=4)
        assert not evidence_proves_foul((bad, b), subject=1)

    def test_same_certificate_twice_is_not_evidence(self):
        a = _powin(rnd=1, players=(1, 2), winner=2)
        assert not evidence_proves_foul((a, a), subject=1)

    def test_cross_round_pair_is_not_evidence(self):
        a = _powin(rnd=1, players=(1, 2), winner=2)
        b = _powin(rnd=2, players=(1, 4), winner=4)
        assert not evidence_proves_foul((a, b), subject=1)


class TestChainOfCustody:
    def test_round_chain_links_resolve(self):
        r1 = _powin(rnd=1, players=(1, 2), winner=1)
        r1_opp = _powin(rnd=1, players=(3, 4), winner=3)
        r2 = _powin(rnd=2, players=(1, 3), winner=1,
                    prev=(r1.auth_tag, r1_opp.auth_tag))
        assert r2.prev_powin_hashes == (r1.auth_tag, r1_opp.auth_tag)
        assert r1.verify_tag() and r2.verify_tag()
        # a tampered previous hash breaks the tag
        forged = PoWin(r2.match_id, r2.tournament_no, r2.round, r2.players,
                       r2.winner, r2.validator, (r1.auth_tag, ROUND_ENTRY),
                       r2.auth_tag)
        assert not forged.verify_tag()
