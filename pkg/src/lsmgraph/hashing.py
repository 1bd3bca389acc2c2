"""Deterministic 64-bit hashing shared by the bloom filters and checksums.

All constants are fixed so that file contents are bit-reproducible across
runs and across machines.
"""

import numpy as np

MASK64 = (1 << 64) - 1

# splitmix64 increments / mixers
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# seeds for the two per-vertex 32-bit sub-hashes of an edge key
SRC_SEED = 0x1B873593_1CA7BC65
DST_SEED = 0x4CF5AD43_2745937F

# seeds for the double-hashing probe sequence of the bloom filter
BLOOM_SEED_1 = 0x8445D61A_4E774912
BLOOM_SEED_2 = 0x2B492845_9E3779B9


def splitmix64(x: int) -> int:
    z = (x + _GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def splitmix64_np(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 over a uint64 array."""
    z = (x + np.uint64(_GAMMA))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def edge_key(src: int, dst: int) -> int:
    """64-bit bloom key: the two vertex IDs hashed to 32 bits each and
    concatenated, source hash in the high half."""
    hs = splitmix64((src + SRC_SEED) & MASK64) >> 32
    hd = splitmix64((dst + DST_SEED) & MASK64) >> 32
    return (hs << 32) | hd


def edge_keys_np(srcs: np.ndarray, dsts: np.ndarray) -> np.ndarray:
    hs = splitmix64_np(srcs.astype(np.uint64) + np.uint64(SRC_SEED)) >> np.uint64(32)
    hd = splitmix64_np(dsts.astype(np.uint64) + np.uint64(DST_SEED)) >> np.uint64(32)
    return (hs << np.uint64(32)) | hd
