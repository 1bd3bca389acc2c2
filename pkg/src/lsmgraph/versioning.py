"""Version chain and snapshot handles.

A Version is an immutable readable-data set: the MemGraphs currently in
memory, the live L0 file IDs, and a frozen view of the leveled manifest.
Publishing replaces the current version atomically; snapshot handles pin a
version plus a read timestamp tau and retire it by refcount when released.
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Optional


class Version:
    __slots__ = ("vid", "memgraphs", "l0_fids", "levels")

    def __init__(self, vid: int, memgraphs: tuple, l0_fids: tuple[int, ...],
                 levels: dict):
        self.vid = vid
        self.memgraphs = memgraphs          # active first, then sealed
        self.l0_fids = l0_fids              # ascending fid
        self.levels = levels                # level -> tuple of SegmentMeta

    def content_key(self):
        return (tuple(id(m) for m in self.memgraphs), self.l0_fids,
                tuple((lvl, tuple(s.fid for s in segs))
                      for lvl, segs in sorted(self.levels.items())))


class SnapshotHandle:
    """Pins one version; reads through the handle see records with
    ts <= tau only."""

    __slots__ = ("tau", "version", "_mgr", "_hid", "_closed")

    def __init__(self, tau: int, version: Version, mgr: "VersionManager", hid: int):
        self.tau = tau
        self.version = version
        self._mgr = mgr
        self._hid = hid
        self._closed = False

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._mgr._release(self)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class VersionManager:
    def __init__(self, on_retire: Optional[Callable[[Version], None]] = None):
        self._lock = threading.Lock()
        self._vid_counter = itertools.count()
        self._hid_counter = itertools.count()
        self._refs: dict[int, int] = {}
        self._versions: dict[int, Version] = {}
        self._active_taus: dict[int, int] = {}
        self._on_retire = on_retire or (lambda v: None)
        self.current = self._register(Version(next(self._vid_counter), (), (), {}))

    def _register(self, version: Version) -> Version:
        self._versions[version.vid] = version
        self._refs[version.vid] = 0
        return version

    def publish(self, memgraphs: tuple, l0_fids: tuple[int, ...],
                levels: dict) -> Version:
        """Install a new current version; must be serialized by the caller
        (the engine's single mutation lock)."""
        with self._lock:
            old = self.current
            version = self._register(Version(next(self._vid_counter),
                                             memgraphs, tuple(sorted(l0_fids)),
                                             levels))
            self.current = version
            retired = self._collect_unpinned(old)
        for v in retired:
            self._on_retire(v)
        return version

    def acquire(self, tau: int) -> SnapshotHandle:
        with self._lock:
            version = self.current
            self._refs[version.vid] += 1
            hid = next(self._hid_counter)
            self._active_taus[hid] = tau
        return SnapshotHandle(tau, version, self, hid)

    def _release(self, handle: SnapshotHandle) -> None:
        with self._lock:
            del self._active_taus[handle._hid]
            vid = handle.version.vid
            self._refs[vid] -= 1
            retired = self._collect_unpinned(handle.version)
        for v in retired:
            self._on_retire(v)

    def _collect_unpinned(self, candidate: Version) -> list[Version]:
        retired = []
        if (candidate.vid != self.current.vid
                and self._refs.get(candidate.vid, 1) == 0):
            del self._versions[candidate.vid]
            del self._refs[candidate.vid]
            retired.append(candidate)
        return retired

    def oldest_active_tau(self) -> Optional[int]:
        with self._lock:
            return min(self._active_taus.values(), default=None)

    def live_l0_fids(self) -> set[int]:
        """L0 fids referenced by any live (pinned or current) version."""
        with self._lock:
            fids: set[int] = set()
            for v in self._versions.values():
                fids.update(v.l0_fids)
            return fids

    def version_count(self) -> int:
        with self._lock:
            return len(self._versions)
