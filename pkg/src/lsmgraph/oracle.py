"""In-memory reference graph used for differential testing.

GraphOracle keeps the full record history per (src, dst) key, so it can
answer visibility queries at any timestamp tau — the same semantics the
engine promises, implemented with nothing but nested dicts."""

from __future__ import annotations

import threading
from typing import Optional


class GraphOracle:
    def __init__(self):
        # src -> dst -> list of (ts, marker, prop), appended in ts order
        self._adj: dict[int, dict[int, list]] = {}
        self._lock = threading.Lock()

    def insert(self, src: int, dst: int, ts: int,
               prop: Optional[bytes] = None) -> None:
        with self._lock:
            self._adj.setdefault(src, {}).setdefault(dst, []).append(
                (ts, False, prop))

    def delete(self, src: int, dst: int, ts: int) -> None:
        with self._lock:
            self._adj.setdefault(src, {}).setdefault(dst, []).append(
                (ts, True, None))

    @staticmethod
    def _winner(recs, tau: int):
        best = None
        for ts, marker, prop in recs:
            if ts <= tau and (best is None or ts > best[0]):
                best = (ts, marker, prop)
        return best

    def get_edge(self, src: int, dst: int, tau: int) -> Optional[bytes]:
        """Mirrors Engine.get_edge: b'' for present-without-property,
        None for absent/tombstoned."""
        with self._lock:
            recs = list(self._adj.get(src, {}).get(dst, ()))
        best = self._winner(recs, tau)
        if best is None or best[1]:
            return None
        return best[2] if best[2] is not None else b""

    def neighbors(self, src: int, tau: int) -> list[tuple[int, Optional[bytes]]]:
        """Visible out-edges of src at tau, sorted by dst."""
        with self._lock:
            items = [(dst, list(recs))
                     for dst, recs in self._adj.get(src, {}).items()]
        out = []
        for dst, recs in items:
            best = self._winner(recs, tau)
            if best is not None and not best[1]:
                out.append((dst, best[2]))
        out.sort(key=lambda e: e[0])
        return out

    def edges(self, tau: int) -> list[tuple[int, int]]:
        """All visible (src, dst) pairs at tau, sorted."""
        with self._lock:
            snap = {src: {dst: list(recs) for dst, recs in dsts.items()}
                    for src, dsts in self._adj.items()}
        out = []
        for src, dsts in snap.items():
            for dst, recs in dsts.items():
                best = self._winner(recs, tau)
                if best is not None and not best[1]:
                    out.append((src, dst))
        out.sort()
        return out

    def edge_count(self, tau: int) -> int:
        return len(self.edges(tau))

    def sources(self) -> list[int]:
        with self._lock:
            return sorted(self._adj)
