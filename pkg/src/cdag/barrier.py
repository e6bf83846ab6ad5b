"""Distributed time barrier: chained wait certificates and oracle resync.

Trusted-hardware waiting is simulated by the event clock. A certificate
for tournament t can only exist once the certificate for t-1 does, and
never earlier than one slot length after it; a skewed node can run late
but never early.
"""

from __future__ import annotations

from dataclasses import dataclass

from .hashing import digest

ORACLE_ID = -1


@dataclass(frozen=True, slots=True)
class BarrierCertificate:
    tournament_no: int
    issued_at: float
    wait: float
    node_id: int
    cert_hash: bytes
    prev_cert_hash: bytes


def genesis_certificate(tau: float) -> BarrierCertificate:
    """Bootstrap certificate for tournament 0, shared by every node."""
    h = digest("barrier-genesis")
    return BarrierCertificate(
        tournament_no=0, issued_at=0.0, wait=tau,
        node_id=ORACLE_ID, cert_hash=h, prev_cert_hash=b"",
    )


def _cert_hash(prev_hash: bytes, tournament_no: int, node_id: int) -> bytes:
    return digest("barrier", prev_hash, tournament_no, node_id)


def wait_certificate(node_id: int, prev: BarrierCertificate, tau: float,
                     clock_skew: float = 0.0) -> BarrierCertificate:
    """Next certificate in a node's chain.

    The node targets the nominal slot boundary shifted by its clock skew,
    but the simulated trusted wait enforces at least one full slot after
    the previous certificate, so a fast clock cannot get ahead.
    """
    t = prev.tournament_no + 1
    issued = max(prev.issued_at + tau, t * tau + clock_skew)
    return BarrierCertificate(
        tournament_no=t,
        issued_at=issued,
        wait=tau,
        node_id=node_id,
        cert_hash=_cert_hash(prev.cert_hash, t, node_id),
        prev_cert_hash=prev.cert_hash,
    )


def verify_certificate(cert: BarrierCertificate, prev: BarrierCertificate) -> bool:
    """Recompute the chain link and slot numbering."""
    if cert.tournament_no != prev.tournament_no + 1:
        return False
    if cert.prev_cert_hash != prev.cert_hash:
        return False
    return cert.cert_hash == _cert_hash(prev.cert_hash, cert.tournament_no, cert.node_id)


class OracleState:
    """One logical trusted oracle pacing the network.

    The oracle keeps its own certificate chain from genesis and hands the
    current certificate to lagging or newly joined nodes, which adopt the
    current slot and chain onward from it. Skipped tournaments cannot be
    played retroactively.
    """

    def __init__(self, tau: float):
        self.tau = tau
        self.genesis = genesis_certificate(tau)
        self._chain: list[BarrierCertificate] = [self.genesis]

    @property
    def current_tournament(self) -> int:
        return self._chain[-1].tournament_no

    def slot_start(self, tournament_no: int) -> float:
        return tournament_no * self.tau

    def advance_to(self, now: float) -> None:
        while (self.current_tournament + 1) * self.tau <= now:
            self._chain.append(
                wait_certificate(ORACLE_ID, self._chain[-1], self.tau))

    def bootstrap(self, now: float) -> BarrierCertificate:
        self.advance_to(now)
        return self._chain[-1]


def resync(node_id: int, oracle: OracleState, now: float) -> BarrierCertificate:
    """Adopt the oracle's current slot; returns the bootstrap certificate."""
    return oracle.bootstrap(now)
