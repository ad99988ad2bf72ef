"""Small shared helpers: stable seeding and deterministic float formatting."""

from __future__ import annotations

import hashlib

_SEP = b"\x1f"


def stable_seed(*parts) -> int:
    """Derive a 64-bit seed from arbitrary parts, stable across processes.

    Python's builtin ``hash`` is salted per interpreter, so parallel jobs
    seeded with it would not be reproducible; hash the textual parts with
    BLAKE2 instead.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(_SEP)
    return int.from_bytes(h.digest(), "little")


def fmt(x: float, places: int = 6) -> str:
    """Fixed-point float rendering used by every CSV writer (byte stable)."""
    return f"{x:.{places}f}"
