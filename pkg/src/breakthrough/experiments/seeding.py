"""Platform-stable 64-bit seed derivation for replications.

Each replication gets its own PCG64 stream seeded with
``derive_seed(base_seed, cell_key, rep_index)``; the result depends only on
those three values, never on worker count or scheduling order.
"""

import hashlib

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (Steele, Lea & Flood constants)."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * MIX_1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_2) & MASK64
    return z ^ (z >> 31)


def key_to_int(key) -> int:
    """Stable 64-bit integer for a string key (first 8 bytes of SHA-256)."""
    if isinstance(key, int):
        return key & MASK64
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(base_seed: int, *keys) -> int:
    h = splitmix64(int(base_seed) & MASK64)
    for k in keys:
        h = splitmix64(h ^ key_to_int(k))
    return h
