"""Content digests and derived seeds.

All identifiers in the simulator are 32-byte SHA-256 digests. Tamper
evidence, not unforgeability, is the property we need: every certificate
carries a digest over its own fields, so any in-simulator mutation is
detectable by recomputation.
"""

from __future__ import annotations

import hashlib

DIGEST_LEN = 32
ZERO_HASH = b"\x00" * DIGEST_LEN


def digest(*parts: bytes | int | str) -> bytes:
    """SHA-256 over a field sequence with unambiguous framing."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, int):
            part = part.to_bytes(16, "big", signed=True)
        elif isinstance(part, str):
            part = part.encode()
        h.update(len(part).to_bytes(4, "big"))
        h.update(part)
    return h.digest()


def hash_to_int(h: bytes) -> int:
    """Interpret a digest as an unsigned big-endian integer."""
    return int.from_bytes(h, "big")


def short(h: bytes) -> str:
    return h[:6].hex()


def derive_seed(master_seed: int, *tags: bytes | int | str) -> int:
    """Stable sub-seed for a named RNG stream, independent of call order."""
    return hash_to_int(digest(master_seed, *tags)[:8])
