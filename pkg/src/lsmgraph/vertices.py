"""Vertex table: append-only vertex log with ID recycling.

Add/delete operations are appended to the VERTICES file so the live set,
the ID watermark, and the free list survive restarts.  Auto-created
vertices are logged only when they advance the watermark.
"""

from __future__ import annotations

import os
import threading


class VertexNotFound(Exception):
    pass


class VertexTable:
    def __init__(self, data_dir: str):
        self._path = os.path.join(data_dir, "VERTICES")
        self._lock = threading.Lock()
        self._deleted: set[int] = set()
        self._free: list[int] = []
        self._free_set: set[int] = set()
        self._next_fresh = 0
        self._file = None
        self._load()
        self._file = open(self._path, "a", encoding="ascii")

    def _load(self) -> None:
        if not os.path.exists(self._path):
            return
        with open(self._path, "r", encoding="ascii") as f:
            for line in f:
                op, sid = line.split()
                vid = int(sid)
                if op == "a":
                    self._deleted.discard(vid)
                    self._free_set.discard(vid)
                    if vid >= self._next_fresh:
                        self._next_fresh = vid + 1
                elif op == "d":
                    self._deleted.add(vid)
                    self._free_set.add(vid)
        self._free = sorted(self._free_set)

    def _log(self, op: str, vid: int) -> None:
        self._file.write(f"{op} {vid}\n")
        self._file.flush()

    def add(self) -> int:
        """Recycled ID if available, else the next fresh one."""
        with self._lock:
            vid = None
            while self._free:
                cand = self._free.pop()
                if cand in self._free_set:
                    self._free_set.discard(cand)
                    vid = cand
                    break
            if vid is None:
                vid = self._next_fresh
                self._next_fresh += 1
            self._deleted.discard(vid)
            self._log("a", vid)
            return vid

    def delete(self, vid: int) -> None:
        with self._lock:
            if not self._is_live_locked(vid):
                raise VertexNotFound(vid)
            self._deleted.add(vid)
            self._free.append(vid)
            self._free_set.add(vid)
            self._log("d", vid)

    def observe(self, vid: int) -> None:
        """Auto-create: an edge referenced this vertex.  Logged only when
        it advances the ID watermark or revives a deleted vertex, so the
        hot insert path normally does no I/O here."""
        with self._lock:
            changed = False
            if vid >= self._next_fresh:
                self._next_fresh = vid + 1
                changed = True
            if vid in self._deleted:
                self._deleted.discard(vid)
                self._free_set.discard(vid)
                changed = True
            if changed:
                self._log("a", vid)

    def _is_live_locked(self, vid: int) -> bool:
        return 0 <= vid < self._next_fresh and vid not in self._deleted

    def is_live(self, vid: int) -> bool:
        with self._lock:
            return self._is_live_locked(vid)

    def max_id(self) -> int:
        """Largest vertex ID ever seen; -1 on a fresh store."""
        with self._lock:
            return self._next_fresh - 1

    def close(self) -> None:
        if self._file:
            self._file.close()
            self._file = None
