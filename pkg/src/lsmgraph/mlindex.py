"""Multi-level index: per-vertex locations of edge runs at every level >= 1
plus the minimum readable L0 file ID.

Each entry inlines up to two positions; a vertex spanning more levels
keeps its bottom-most position inline (the bottom levels hold most of the
data) and spills the rest to a 4 KiB overflow page.  Pages partition the
vertex-ID space into intervals, split in half when full and merge with a
neighbor when both run nearly empty.

The index is memory-only and is rebuilt from the segment offset tables on
startup.  Entry reads/writes are coordinated by the engine's per-vertex
read/write permits; page-set structure changes take an internal lock.
"""

from __future__ import annotations

import threading
from bisect import bisect_right
from typing import NamedTuple, Optional, Union

PAGE_BYTES = 4096
PAGE_META_BYTES = 16
# modeled cost of one overflow position: 8B vertex id + level/fid/offset/count
POSITION_BYTES = 29
PAGE_CAPACITY = (PAGE_BYTES - PAGE_META_BYTES) // POSITION_BYTES
INITIAL_INTERVAL = 1024
MERGE_FILL = 0.25


class Position(NamedTuple):
    level: int
    fid: int
    offset: int
    count: int


class PageRef(NamedTuple):
    page_id: int
    offset_in_page: int


class _Page:
    __slots__ = ("page_id", "start", "width", "entries")

    def __init__(self, page_id: int, start: int, width: int):
        self.page_id = page_id
        self.start = start
        self.width = width
        self.entries: dict[int, list[Position]] = {}

    @property
    def used(self) -> int:
        return sum(len(v) for v in self.entries.values())


class _PageSet:
    """Overflow pages keyed by vertex interval.

    on_move(vertex, page_ref) is invoked whenever a split or merge
    relocates a vertex's overflow positions, so the owning index entry can
    refresh its PageRef.
    """

    def __init__(self, on_move=None):
        self._on_move = on_move or (lambda v, ref: None)
        self._starts: list[int] = []
        self._pages: dict[int, _Page] = {}      # start -> page
        self._by_id: dict[int, _Page] = {}
        self._next_id = 0

    def _page_for(self, vertex: int, create: bool) -> Optional[_Page]:
        i = bisect_right(self._starts, vertex) - 1
        if i >= 0:
            page = self._pages[self._starts[i]]
            if page.start <= vertex < page.start + page.width:
                return page
        if not create:
            return None
        start = (vertex // INITIAL_INTERVAL) * INITIAL_INTERVAL
        return self._insert_page(start, INITIAL_INTERVAL)

    def _insert_page(self, start: int, width: int) -> _Page:
        page = _Page(self._next_id, start, width)
        self._next_id += 1
        i = bisect_right(self._starts, start)
        self._starts.insert(i, start)
        self._pages[start] = page
        self._by_id[page.page_id] = page
        return page

    def _remove_page(self, page: _Page) -> None:
        self._starts.remove(page.start)
        del self._pages[page.start]
        del self._by_id[page.page_id]

    @staticmethod
    def _ref(page: _Page, vertex: int) -> PageRef:
        off = PAGE_META_BYTES + list(page.entries).index(vertex) * POSITION_BYTES
        return PageRef(page.page_id, off)

    def _notify_all(self, page: _Page) -> None:
        for v in page.entries:
            self._on_move(v, self._ref(page, v))

    def put(self, vertex: int, positions: list[Position]) -> PageRef:
        page = self._page_for(vertex, create=True)
        page.entries[vertex] = positions
        while page.used > PAGE_CAPACITY:
            page = self._split(page, vertex)
        return self._ref(page, vertex)

    def _split(self, page: _Page, vertex: int) -> _Page:
        if page.width <= 1:
            return page  # cannot split further; capacity >> levels, unreachable
        half = page.width // 2
        left = _Page(page.page_id, page.start, half)
        right = self._insert_page(page.start + half, page.width - half)
        for v, pos in page.entries.items():
            (left if v < right.start else right).entries[v] = pos
        self._pages[page.start] = left
        self._by_id[left.page_id] = left
        self._notify_all(left)
        self._notify_all(right)
        return left if vertex < right.start else right

    def remove(self, vertex: int) -> None:
        page = self._page_for(vertex, create=False)
        if page is None or vertex not in page.entries:
            return
        del page.entries[vertex]
        if not page.entries:
            self._remove_page(page)
            return
        self._maybe_merge(page)

    def _maybe_merge(self, page: _Page) -> None:
        i = self._starts.index(page.start)
        if i + 1 >= len(self._starts):
            return
        nxt = self._pages[self._starts[i + 1]]
        if nxt.start != page.start + page.width:
            return
        fill = MERGE_FILL * PAGE_CAPACITY
        if page.used < fill and nxt.used < fill:
            self._remove_page(nxt)
            page.width += nxt.width
            page.entries.update(nxt.entries)
            self._notify_all(page)

    def get(self, vertex: int) -> list[Position]:
        page = self._page_for(vertex, create=False)
        if page is None:
            return []
        return list(page.entries.get(vertex, ()))

    def page_count(self) -> int:
        return len(self._by_id)


class IndexEntry:
    __slots__ = ("min_l0_fid", "slot2", "slot3")

    def __init__(self, min_l0_fid: int = 0,
                 slot2: Optional[Position] = None,
                 slot3: Union[Position, PageRef, None] = None):
        self.min_l0_fid = min_l0_fid
        self.slot2 = slot2
        self.slot3 = slot3


class MultiLevelIndex:
    def __init__(self):
        self._entries: dict[int, IndexEntry] = {}
        self._pages = _PageSet(on_move=self._refresh_page_ref)
        self._lock = threading.Lock()
        self.default_min_l0 = 0

    def _refresh_page_ref(self, vertex: int, ref: PageRef) -> None:
        entry = self._entries.get(vertex)
        if entry is not None and isinstance(entry.slot3, PageRef):
            entry.slot3 = ref

    # -- reads (caller holds the per-vertex read permit) ------------------

    def get(self, vertex: int) -> tuple[int, list[Position]]:
        """(min_l0_fid, positions at all levels >= 1), positions sorted by
        level ascending; at most one page dereference."""
        entry = self._entries.get(vertex)
        if entry is None:
            return self.default_min_l0, []
        positions = []
        if entry.slot2 is not None:
            positions.append(entry.slot2)
        if isinstance(entry.slot3, PageRef):
            positions.extend(self._pages.get(vertex))
        elif entry.slot3 is not None:
            positions.append(entry.slot3)
        positions.sort(key=lambda p: p.level)
        return entry.min_l0_fid, positions

    # -- writes (caller holds the per-vertex write permit) ----------------

    def set_positions(self, vertex: int, positions: list[Position],
                      min_l0_fid: Optional[int] = None) -> None:
        """Atomically replace the vertex's recorded positions; min_l0_fid
        is updated only when given (L0-sourced compactions)."""
        with self._lock:
            entry = self._entries.get(vertex)
            had_page = entry is not None and isinstance(entry.slot3, PageRef)
            new_min = (min_l0_fid if min_l0_fid is not None
                       else entry.min_l0_fid if entry else self.default_min_l0)
            if not positions and new_min == self.default_min_l0:
                if entry is not None:
                    if had_page:
                        self._pages.remove(vertex)
                    del self._entries[vertex]
                return
            if len(positions) <= 2:
                if had_page:
                    self._pages.remove(vertex)
                slot2 = positions[0] if positions else None
                slot3 = positions[1] if len(positions) > 1 else None
            else:
                inline = max(positions, key=lambda p: p.level)
                rest = [p for p in positions if p is not inline]
                slot2 = inline
                slot3 = self._pages.put(vertex, rest)
            # readers see the old or the new entry object, never a mixture
            self._entries[vertex] = IndexEntry(new_min, slot2, slot3)

    # -- recovery ----------------------------------------------------------

    def rebuild(self, manifest, get_reader) -> None:
        """Reconstruct from the segment offset tables.  Exact per-vertex
        minimum readable L0 fids are not recoverable from the files; the
        smallest live L0 fid is safe (extra probes are filtered by range
        checks and blooms)."""
        l0 = manifest.levels.get(0, [])
        self.default_min_l0 = min((s.fid for s in l0), default=0)
        acc: dict[int, list[Position]] = {}
        for level in sorted(manifest.levels):
            if level == 0:
                continue
            for meta in manifest.levels[level]:
                reader = get_reader(meta.fid)
                for src, off, cnt in reader.offsets_table():
                    acc.setdefault(src, []).append(
                        Position(level, meta.fid, off, cnt))
        self._entries.clear()
        self._pages = _PageSet(on_move=self._refresh_page_ref)
        for v, positions in acc.items():
            self.set_positions(v, positions)

    # -- introspection ------------------------------------------------------

    def entry_layout(self, vertex: int) -> dict:
        entry = self._entries.get(vertex)
        if entry is None:
            return {"present": False}
        return {
            "present": True,
            "min_l0_fid": entry.min_l0_fid,
            "slot2": entry.slot2,
            "slot3": entry.slot3,
            "slot3_tag": ("page" if isinstance(entry.slot3, PageRef)
                          else "position" if entry.slot3 is not None else "empty"),
        }

    def page_count(self) -> int:
        return self._pages.page_count()
