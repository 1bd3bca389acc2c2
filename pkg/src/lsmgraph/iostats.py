"""Disk I/O accounting.

Every disk read and write performed by the engine goes through a Counters
instance so benchmarks and tests can assert on byte/block amounts.  A
"block read" is one logical data access: a body-run read, an on-disk
offset-table search, or a property fetch.
"""

from __future__ import annotations

import threading
from collections import deque


class Counters:
    __slots__ = ("_lock", "bytes_read", "bytes_written", "blocks_read",
                 "_write_lat")

    def __init__(self, latency_window: int = 200_000):
        self._lock = threading.Lock()
        self.bytes_read = 0
        self.bytes_written = 0
        self.blocks_read = 0
        self._write_lat = deque(maxlen=latency_window)

    def add_read(self, nbytes: int, blocks: int = 0) -> None:
        with self._lock:
            self.bytes_read += nbytes
            self.blocks_read += blocks

    def add_write(self, nbytes: int) -> None:
        with self._lock:
            self.bytes_written += nbytes

    def record_write_latency(self, seconds: float) -> None:
        with self._lock:
            self._write_lat.append(seconds)

    def write_latency_percentiles(self) -> tuple[float, float]:
        """(p50, p99) of recorded write latencies in seconds; zeros if none."""
        with self._lock:
            lat = sorted(self._write_lat)
        if not lat:
            return 0.0, 0.0
        p50 = lat[int(0.50 * (len(lat) - 1))]
        p99 = lat[int(0.99 * (len(lat) - 1))]
        return p50, p99

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "bytes_read": self.bytes_read,
                "bytes_written": self.bytes_written,
                "blocks_read": self.blocks_read,
            }
