"""In-memory write cache.

Edges are buffered per source vertex: low-degree vertices live in
fixed-size arena segments allocated in edge-arrival order, and a vertex
whose segment overflows migrates wholesale to a per-vertex ordered list
(the skip-list role).  The two stores are exclusive per vertex.

Records are immutable tuples ``(dst, ts, prop, marker)``; a record becomes
visible to readers in a single list append / insert, so readers need no
locks -- they filter by their snapshot timestamp instead.

Memory accounting is a documented model, not sys.getsizeof: it mirrors
what a compact native layout would charge, and it is what the byte budget
(64 MiB by default) is enforced against.
"""

from __future__ import annotations

from bisect import insort
from typing import Iterator, Optional

# accounting model, bytes
BASE_OVERHEAD = 64          # empty-MemGraph fixed cost
VERTEX_INDEX_BYTES = 24     # one hash-table entry
RECORD_BYTES = 32           # record payload, mirrors the on-disk body size
SKIP_RECORD_BYTES = 48      # record + ordered-list node overhead

MODE_ARENA = "arena"
MODE_SKIPLIST = "skiplist"


class MemGraphFull(Exception):
    """Raised when an insert would exceed the byte budget; the record was
    not inserted and the caller must seal and roll over."""


class MemGraphSealed(Exception):
    pass


class _VertexEdges:
    __slots__ = ("mode", "recs")

    def __init__(self):
        self.mode = MODE_ARENA
        self.recs = []


def _rec_key(rec):
    return (rec[0], rec[1])


class MemGraph:
    def __init__(self, byte_budget: int, segment_records: int = 4):
        if byte_budget <= 0 or segment_records <= 0:
            raise ValueError("byte_budget and segment_records must be positive")
        self.byte_budget = byte_budget
        self.segment_records = segment_records
        self.sealed = False
        self._vertices: dict[int, _VertexEdges] = {}
        self._bytes = BASE_OVERHEAD
        self._records = 0
        self._dead_segments = 0
        self._max_ts = 0

    # -- writes ---------------------------------------------------------

    def insert(self, src: int, dst: int, prop: Optional[bytes], ts: int,
               marker: bool = False) -> None:
        """Append one record.  Caller holds the per-vertex write permit for
        src and guarantees ts is globally unique and increasing."""
        if self.sealed:
            raise MemGraphSealed("insert on sealed MemGraph")
        plen = len(prop) if prop else 0
        seg = self.segment_records
        ve = self._vertices.get(src)
        if ve is None:
            delta = VERTEX_INDEX_BYTES + seg * RECORD_BYTES + plen
        elif ve.mode == MODE_ARENA and len(ve.recs) >= seg:
            # migration: everything moves to an ordered list, the arena
            # segment is abandoned but its bytes stay counted
            delta = (len(ve.recs) + 1) * SKIP_RECORD_BYTES + plen
        elif ve.mode == MODE_ARENA:
            delta = plen
        else:
            delta = SKIP_RECORD_BYTES + plen
        if self._records and self._bytes + delta > self.byte_budget:
            raise MemGraphFull()

        rec = (dst, ts, prop, marker)
        if ve is None:
            ve = _VertexEdges()
            ve.recs.append(rec)
            self._vertices[src] = ve
        elif ve.mode == MODE_ARENA and len(ve.recs) >= seg:
            recs = sorted(ve.recs + [rec], key=_rec_key)
            ve.recs = recs          # single publication step
            ve.mode = MODE_SKIPLIST
            self._dead_segments += 1
        elif ve.mode == MODE_ARENA:
            ve.recs.append(rec)
        else:
            insort(ve.recs, rec, key=_rec_key)
        self._bytes += delta
        self._records += 1
        if ts > self._max_ts:
            self._max_ts = ts

    def seal(self) -> None:
        self.sealed = True

    # -- reads ----------------------------------------------------------

    def collect(self, src: int, tau: int) -> list[tuple]:
        """All records for src with ts <= tau, tombstones included.
        Lock-free: works from a point-in-time copy of the vertex's list."""
        ve = self._vertices.get(src)
        if ve is None:
            return []
        recs = list(ve.recs)
        return [r for r in recs if r[1] <= tau]

    def scan(self, src: int, tau: int) -> list[tuple]:
        """Visible (dst, prop) pairs for src at tau: per dst the newest
        record with ts <= tau wins, tombstone winners dropped, sorted."""
        best: dict[int, tuple] = {}
        for rec in self.collect(src, tau):
            cur = best.get(rec[0])
            if cur is None or rec[1] > cur[1]:
                best[rec[0]] = rec
        return sorted((r[0], r[2]) for r in best.values() if not r[3])

    def drain_sorted(self) -> Iterator[tuple]:
        """Yield every record as (src, dst, ts, prop, marker) in
        (src, dst, ts) order.  Tombstones are retained: they must mask
        older on-disk records after the flush."""
        if not self.sealed:
            raise MemGraphSealed("drain_sorted requires a sealed MemGraph")
        for src in sorted(self._vertices):
            ve = self._vertices[src]
            recs = ve.recs if ve.mode == MODE_SKIPLIST else sorted(ve.recs, key=_rec_key)
            for dst, ts, prop, marker in recs:
                yield src, dst, ts, prop, marker

    # -- introspection ---------------------------------------------------

    def memory_usage(self) -> int:
        return self._bytes

    def record_count(self) -> int:
        return self._records

    def max_ts(self) -> int:
        return self._max_ts

    def is_empty(self) -> bool:
        return self._records == 0

    def storage_mode(self, src: int) -> Optional[str]:
        ve = self._vertices.get(src)
        return ve.mode if ve else None

    def degree(self, src: int) -> int:
        ve = self._vertices.get(src)
        return len(ve.recs) if ve else 0

    def vertices(self) -> list[int]:
        return list(self._vertices)
