"""Vertex-grained locking.

The engine serializes writers per vertex and lets readers of a vertex run
concurrently with each other.  A lock per vertex would not scale to
millions of IDs, so locks are striped: vertex -> stripe by hash.  Two
distinct vertices may share a stripe, which only ever over-serializes --
the per-vertex contract still holds.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

from .hashing import splitmix64


class RWLock:
    """Writer-preferring read-write lock."""

    def __init__(self):
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._writer = False
        self._writers_waiting = 0

    def acquire_read(self):
        with self._cond:
            while self._writer or self._writers_waiting:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            self._writers_waiting += 1
            try:
                while self._writer or self._readers:
                    self._cond.wait()
            finally:
                self._writers_waiting -= 1
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class StripedRWLocks:
    def __init__(self, stripes: int = 256):
        self._locks = [RWLock() for _ in range(stripes)]
        self._n = stripes

    def _lock_for(self, vertex: int) -> RWLock:
        return self._locks[splitmix64(vertex) % self._n]

    @contextmanager
    def read(self, vertex: int):
        lk = self._lock_for(vertex)
        lk.acquire_read()
        try:
            yield
        finally:
            lk.release_read()

    @contextmanager
    def write(self, vertex: int):
        lk = self._lock_for(vertex)
        lk.acquire_write()
        try:
            yield
        finally:
            lk.release_write()
