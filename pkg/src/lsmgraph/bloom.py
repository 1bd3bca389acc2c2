"""Bloom filter over 64-bit edge keys.

Keys are the concatenation of two 32-bit vertex hashes (see hashing.py).
Probe positions come from double hashing: pos_i = (g1 + i * g2) mod m.
The bit array is byte-serialized verbatim into the edge file.
"""

from __future__ import annotations

import numpy as np

from .hashing import BLOOM_SEED_1, BLOOM_SEED_2, MASK64, splitmix64, splitmix64_np

K_PROBES = 7


class BloomFilter:
    __slots__ = ("bits", "m")

    def __init__(self, bits: np.ndarray):
        self.bits = bits  # uint8 array
        self.m = len(bits) * 8

    @classmethod
    def build(cls, keys: np.ndarray, bits_per_key: int) -> "BloomFilter":
        n = len(keys)
        nbytes = max(8, (n * bits_per_key + 7) // 8)
        bits = np.zeros(nbytes, dtype=np.uint8)
        bf = cls(bits)
        if n:
            bf._add_keys(keys.astype(np.uint64))
        return bf

    @classmethod
    def from_bytes(cls, raw: bytes) -> "BloomFilter":
        return cls(np.frombuffer(raw, dtype=np.uint8).copy())

    def to_bytes(self) -> bytes:
        return self.bits.tobytes()

    def _add_keys(self, keys: np.ndarray) -> None:
        m = np.uint64(self.m)
        g1 = splitmix64_np(keys + np.uint64(BLOOM_SEED_1))
        g2 = splitmix64_np(keys + np.uint64(BLOOM_SEED_2)) | np.uint64(1)
        for i in range(K_PROBES):
            pos = (g1 + np.uint64(i) * g2) % m
            np.bitwise_or.at(self.bits, (pos >> np.uint64(3)).astype(np.int64),
                             np.left_shift(np.uint8(1), (pos & np.uint64(7)).astype(np.uint8)))

    def maybe_contains(self, key: int) -> bool:
        g1 = splitmix64((key + BLOOM_SEED_1) & MASK64)
        g2 = splitmix64((key + BLOOM_SEED_2) & MASK64) | 1
        bits = self.bits
        m = self.m
        for i in range(K_PROBES):
            # wrap to 64 bits first: the vectorized build path wraps too
            pos = ((g1 + i * g2) & MASK64) % m
            if not (bits[pos >> 3] >> (pos & 7)) & 1:
                return False
        return True
