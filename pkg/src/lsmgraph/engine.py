"""Public engine facade.

Routes writes through per-vertex permits into the active MemGraph, seals
and flushes full MemGraphs to L0 in the background, runs compactions, and
executes snapshot reads by combining the pinned version (MemGraphs + L0)
with the multi-level index (levels >= 1).

Durability note: there is no write-ahead log.  Data still in a MemGraph is
lost on crash; close() flushes by default so a clean shutdown persists
everything.
"""

from __future__ import annotations

import logging
import os
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from . import levels as levels_mod
from .iostats import Counters
from .locks import StripedRWLocks
from .memgraph import MemGraph, MemGraphFull, MemGraphSealed
from .mlindex import MultiLevelIndex, Position
from .segment import NO_PROP, CsrSegmentReader, edge_path, prop_path
from .versioning import SnapshotHandle, VersionManager
from .vertices import VertexNotFound, VertexTable

logger = logging.getLogger(__name__)

MIB = 1024 * 1024


class EngineError(Exception):
    pass


class ConfigError(EngineError):
    pass


@dataclass
class EngineConfig:
    data_dir: str
    memgraph_bytes: int = 64 * MIB
    level_factor: int = 10
    max_levels: int = 5
    l0_limit: int = 4
    segment_target_bytes: int = 8 * MIB
    arena_segment_records: int = 4
    bloom_bits_per_key: int = 10
    use_mlindex: bool = True          # False: manifest-range + bloom probing
    auto_create_vertices: bool = True
    background: bool = True           # flush/compaction on background threads
    flush_on_close: bool = True
    lock_stripes: int = 256
    verify_crc_on_open: bool = True

    def validate(self) -> None:
        if self.level_factor < 2:
            raise ConfigError("level_factor must be >= 2")
        if self.max_levels < 1:
            raise ConfigError("max_levels must be >= 1")
        for name in ("memgraph_bytes", "l0_limit", "segment_target_bytes",
                     "arena_segment_records", "bloom_bits_per_key",
                     "lock_stripes"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def level_capacity(self, level: int) -> int:
        return self.memgraph_bytes * self.level_factor ** level


class _ReaderRegistry:
    """Open segment readers, shared across threads.  Retired readers stay
    open until no snapshot handle could still be using them (files may be
    unlinked earlier; open descriptors keep the data readable)."""

    def __init__(self, data_dir: str, counters: Counters, verify_crc: bool):
        self._dir = data_dir
        self._counters = counters
        self._verify = verify_crc
        self._lock = threading.Lock()
        self._readers: dict[int, CsrSegmentReader] = {}
        self._retired: list[CsrSegmentReader] = []

    def get(self, fid: int) -> CsrSegmentReader:
        with self._lock:
            r = self._readers.get(fid)
            if r is None:
                r = CsrSegmentReader(self._dir, fid, self._counters,
                                     verify_crc=self._verify)
                self._readers[fid] = r
            return r

    def retire(self, fid: int) -> None:
        """Mark fid's files as about to be unlinked.  The reader is opened
        (if it wasn't yet) and stays resolvable via get() so pinned
        snapshots keep reading through the open descriptor."""
        with self._lock:
            r = self._readers.get(fid)
            if r is None:
                r = CsrSegmentReader(self._dir, fid, self._counters,
                                     verify_crc=self._verify)
                self._readers[fid] = r
            self._retired.append(fid)

    def close_retired(self) -> None:
        """Only call when no snapshot handles are outstanding."""
        with self._lock:
            for fid in self._retired:
                r = self._readers.pop(fid, None)
                if r is not None:
                    r.close()
            self._retired.clear()

    def close_all(self) -> None:
        with self._lock:
            for r in self._readers.values():
                r.close()
            self._readers.clear()
            self._retired.clear()


class Engine:
    def __init__(self, config: EngineConfig):
        config.validate()
        self.config = config
        os.makedirs(config.data_dir, exist_ok=True)
        self.counters = Counters()
        self._readers = _ReaderRegistry(config.data_dir, self.counters,
                                        config.verify_crc_on_open)
        self._manifest = levels_mod.Manifest.load(config.data_dir)
        self._index = MultiLevelIndex()
        self._index.rebuild(self._manifest, self._readers.get)
        self._vertices = VertexTable(config.data_dir)
        self._stripes = StripedRWLocks(config.lock_stripes)

        # global timestamp source: atomic counter + in-flight set, so a
        # snapshot never includes a ts that is allocated but unpublished
        self._ts_lock = threading.Lock()
        self._last_ts = self._recover_last_ts()
        self._inflight: set[int] = set()

        self._versions = VersionManager(on_retire=lambda v: self._gc_files())
        self._mutation = threading.Condition(threading.RLock())
        self._active_mg = self._new_memgraph()
        self._sealed_mg: Optional[MemGraph] = None
        self._pending_delete: set[int] = set()
        with self._mutation:
            self._publish_locked()

        self._closed = False
        self._flush_queue: queue.Queue = queue.Queue()
        self._compact_event = threading.Event()
        self._threads: list[threading.Thread] = []
        if config.background:
            t1 = threading.Thread(target=self._flush_loop, name="lsmgraph-flush",
                                  daemon=True)
            t2 = threading.Thread(target=self._compact_loop, name="lsmgraph-compact",
                                  daemon=True)
            t1.start()
            t2.start()
            self._threads = [t1, t2]

    # -- construction helpers ---------------------------------------------

    def _new_memgraph(self) -> MemGraph:
        return MemGraph(self.config.memgraph_bytes,
                        self.config.arena_segment_records)

    def _recover_last_ts(self) -> int:
        last = 0
        for _, meta in self._manifest.all_segments():
            r = self._readers.get(meta.fid)
            last = max(last, r.creation_ts)
        return last

    def _publish_locked(self):
        memgraphs = (self._active_mg,) + ((self._sealed_mg,) if self._sealed_mg else ())
        l0 = tuple(s.fid for s in self._manifest.levels.get(0, ()))
        lvls = {lvl: tuple(segs) for lvl, segs in self._manifest.levels.items()
                if lvl > 0 and segs}
        return self._versions.publish(memgraphs, l0, lvls)

    # -- timestamps ---------------------------------------------------------

    def _begin_write(self) -> int:
        with self._ts_lock:
            self._last_ts += 1
            ts = self._last_ts
            self._inflight.add(ts)
            return ts

    def _end_write(self, ts: int) -> None:
        with self._ts_lock:
            self._inflight.discard(ts)

    def _snapshot_tau(self) -> int:
        with self._ts_lock:
            if self._inflight:
                return min(self._inflight) - 1
            return self._last_ts

    # -- write path ----------------------------------------------------------

    def insert_edge(self, src: int, dst: int, prop: Optional[bytes] = None) -> int:
        return self._write(src, dst, prop, marker=False)

    def _write(self, src: int, dst: int, prop: Optional[bytes], marker: bool) -> int:
        if self._closed:
            raise EngineError("engine closed")
        if self.config.auto_create_vertices:
            self._vertices.observe(src)
            self._vertices.observe(dst)
        t0 = time.perf_counter()
        with self._stripes.write(src):
            ts = self._begin_write()
            try:
                while True:
                    mg = self._active_mg
                    try:
                        mg.insert(src, dst, prop, ts, marker)
                        break
                    except MemGraphFull:
                        self._rollover(mg)
                    except MemGraphSealed:
                        continue
            finally:
                self._end_write(ts)
        self.counters.record_write_latency(time.perf_counter() - t0)
        return ts

    def _rollover(self, full_mg: MemGraph) -> None:
        """Seal the full MemGraph, swap in the alternate, enqueue the flush.
        Blocks (backpressure) while the alternate is still being flushed."""
        with self._mutation:
            while True:
                if self._active_mg is not full_mg:
                    return  # another writer already rolled over
                if self._sealed_mg is None:
                    break
                self._mutation.wait()
            full_mg.seal()
            if self.config.background:
                self._sealed_mg = full_mg
                self._active_mg = self._new_memgraph()
                self._publish_locked()
                self._flush_queue.put(full_mg)
            else:
                self._active_mg = self._new_memgraph()
                self._publish_locked()
                self._flush_memgraph(full_mg)

    def delete_edge(self, src: int, dst: int) -> Optional[int]:
        """Tombstone (src, dst) if it is currently visible; None if absent."""
        if self._closed:
            raise EngineError("engine closed")
        if self.config.auto_create_vertices:
            self._vertices.observe(src)
            self._vertices.observe(dst)
        t0 = time.perf_counter()
        with self._stripes.write(src):
            # visibility is judged at the current max timestamp, not at a
            # snapshot tau: under the src write permit every record of this
            # key is complete, and unrelated in-flight writes on other
            # vertices must not hide our own prior insert
            with self._ts_lock:
                check_tau = self._last_ts
            with self._versions.acquire(check_tau) as h:
                present = self._get_edge_impl(src, dst, h, permit=False) is not None
            if not present:
                return None
            ts = self._begin_write()
            try:
                while True:
                    mg = self._active_mg
                    try:
                        mg.insert(src, dst, None, ts, marker=True)
                        break
                    except MemGraphFull:
                        self._rollover(mg)
                    except MemGraphSealed:
                        continue
            finally:
                self._end_write(ts)
        self.counters.record_write_latency(time.perf_counter() - t0)
        return ts

    # -- vertices --------------------------------------------------------------

    def add_vertex(self) -> int:
        return self._vertices.add()

    def delete_vertex(self, vertex: int) -> None:
        """Tombstones the vertex and its visible out-edges."""
        if not self._vertices.is_live(vertex):
            raise VertexNotFound(vertex)
        with self.snapshot() as h:
            targets = [dst for dst, _ in self.scan_neighbors(vertex, h)]
        for dst in targets:
            self.delete_edge(vertex, dst)
        self._vertices.delete(vertex)

    def max_vertex_id(self) -> int:
        return self._vertices.max_id()

    def is_live_vertex(self, vertex: int) -> bool:
        return self._vertices.is_live(vertex)

    # -- snapshots & reads ---------------------------------------------------

    def snapshot(self) -> SnapshotHandle:
        return self._versions.acquire(self._snapshot_tau())

    def read_plan(self, src: int, handle: SnapshotHandle) -> dict:
        """The ordered readable-data set for src at the handle's version:
        memgraphs, the consultable L0 fids (newest first), and the indexed
        level positions."""
        with self._stripes.read(src):
            min_l0, positions = self._index.get(src)
        version = handle.version
        l0 = [f for f in version.l0_fids if f >= min_l0]
        l0.reverse()
        return {"memgraphs": list(version.memgraphs), "l0_fids": l0,
                "positions": positions, "min_l0_fid": min_l0}

    def scan_neighbors(self, src: int, handle: Optional[SnapshotHandle] = None,
                       ordered: bool = True, with_props: bool = False,
                       ) -> list[tuple[int, Optional[bytes]]]:
        """Visible out-edges of src at the handle's tau as (dst, prop)
        pairs; prop is only fetched from disk when with_props is set."""
        own = handle is None
        if own:
            handle = self.snapshot()
        try:
            best = self._collect_best(src, handle, permit=True)
        finally:
            if own:
                handle.close()
        out = []
        for dst, (ts, marker, payload) in best.items():
            if marker:
                continue
            out.append((dst, self._materialize_prop(payload, with_props)))
        if ordered:
            out.sort(key=lambda e: e[0])
        return out

    def _materialize_prop(self, payload, with_props: bool) -> Optional[bytes]:
        if payload is None or isinstance(payload, bytes):
            return payload
        if not with_props:
            return None
        fid, prop_off = payload
        if prop_off == NO_PROP:
            return None
        return self._readers.get(fid).read_prop(prop_off)

    def _collect_best(self, src: int, handle: SnapshotHandle,
                      permit: bool) -> dict:
        """dst -> (ts, marker, payload) of the newest record with ts <= tau
        across every source in the read plan.  payload is bytes|None for
        MemGraph records and (fid, prop_offset) for disk records."""
        tau = handle.tau
        version = handle.version
        if self.config.use_mlindex:
            if permit:
                with self._stripes.read(src):
                    min_l0, positions = self._index.get(src)
            else:
                min_l0, positions = self._index.get(src)
        else:
            min_l0, positions = 0, None

        best: dict[int, tuple] = {}

        def update(dst, ts, marker, payload):
            cur = best.get(dst)
            if cur is None or ts > cur[0]:
                best[dst] = (ts, marker, payload)

        for mg in version.memgraphs:
            for dst, ts, prop, marker in mg.collect(src, tau):
                update(dst, ts, marker, prop)
        for fid in version.l0_fids:
            if fid < min_l0:
                continue
            r = self._readers.get(fid)
            if src < r.min_src or src > r.max_src:
                continue
            for body in r.read_adjacency(src):
                ts = int(body["ts"])
                if ts <= tau:
                    update(int(body["dst"]), ts, bool(body["marker"]),
                           (fid, int(body["prop"])))
        if self.config.use_mlindex:
            for pos in positions:
                r = self._readers.get(pos.fid)
                for body in r.read_run(pos.offset, pos.count):
                    ts = int(body["ts"])
                    if ts <= tau:
                        update(int(body["dst"]), ts, bool(body["marker"]),
                               (pos.fid, int(body["prop"])))
        else:
            for lvl in sorted(version.levels):
                for meta in version.levels[lvl]:
                    if meta.min_src <= src <= meta.max_src:
                        r = self._readers.get(meta.fid)
                        for body in r.read_adjacency(src):
                            ts = int(body["ts"])
                            if ts <= tau:
                                update(int(body["dst"]), ts, bool(body["marker"]),
                                       (meta.fid, int(body["prop"])))
                        break  # ranges are disjoint within a level
        return best

    def get_edge(self, src: int, dst: int,
                 handle: Optional[SnapshotHandle] = None) -> Optional[bytes]:
        """Newest visible property for (src, dst), b'' when the edge exists
        without a property, None when absent or tombstoned.  Disk probes
        are bloom-gated."""
        own = handle is None
        if own:
            handle = self.snapshot()
        try:
            return self._get_edge_impl(src, dst, handle, permit=True)
        finally:
            if own:
                handle.close()

    def _get_edge_impl(self, src, dst, handle, permit: bool) -> Optional[bytes]:
        tau = handle.tau
        version = handle.version

        def resolve(found):
            ts, marker, payload = found
            if marker:
                return None
            prop = self._materialize_prop(payload, with_props=True)
            return prop if prop is not None else b""

        # sources ordered newest-first: within each one, records for a key
        # are newer than in every later source, so the first hit wins
        for mg in version.memgraphs:
            hit = None
            for rdst, ts, prop, marker in mg.collect(src, tau):
                if rdst == dst and (hit is None or ts > hit[0]):
                    hit = (ts, marker, prop)
            if hit:
                return resolve(hit)

        if self.config.use_mlindex:
            if permit:
                with self._stripes.read(src):
                    min_l0, positions = self._index.get(src)
            else:
                min_l0, positions = self._index.get(src)
        else:
            min_l0, positions = 0, None

        def probe_bodies(reader, bodies):
            hit = None
            for body in bodies:
                if int(body["dst"]) == dst and int(body["ts"]) <= tau:
                    if hit is None or int(body["ts"]) > hit[0]:
                        hit = (int(body["ts"]), bool(body["marker"]),
                               (reader.fid, int(body["prop"])))
            return hit

        for fid in reversed(version.l0_fids):
            if fid < min_l0:
                continue
            r = self._readers.get(fid)
            if src < r.min_src or src > r.max_src or not r.maybe_contains(src, dst):
                continue
            hit = probe_bodies(r, r.read_adjacency(src))
            if hit:
                return resolve(hit)
        if self.config.use_mlindex:
            for pos in positions:  # level ascending = newest first
                r = self._readers.get(pos.fid)
                if not r.maybe_contains(src, dst):
                    continue
                hit = probe_bodies(r, r.read_run(pos.offset, pos.count))
                if hit:
                    return resolve(hit)
        else:
            for lvl in sorted(version.levels):
                for meta in version.levels[lvl]:
                    if meta.min_src <= src <= meta.max_src:
                        r = self._readers.get(meta.fid)
                        if r.maybe_contains(src, dst):
                            hit = probe_bodies(r, r.read_adjacency(src))
                            if hit:
                                return resolve(hit)
                        break
        return None

    # -- flush / compaction -------------------------------------------------

    def _flush_loop(self):
        while True:
            mg = self._flush_queue.get()
            if mg is None:
                return
            while True:
                try:
                    self._flush_memgraph(mg)
                    break
                except OSError:
                    logger.exception("flush failed; MemGraph retained, retrying")
                    time.sleep(0.5)
                    if self._closed:
                        return

    def _flush_memgraph(self, mg: MemGraph) -> int:
        with self._mutation:
            fid = self._manifest.allocate_fid()
            creation_ts = self._last_ts
        meta = levels_mod.flush_memgraph(mg, self.config.data_dir, fid,
                                         creation_ts,
                                         self.config.bloom_bits_per_key,
                                         self.counters)
        with self._mutation:
            self._manifest.add_l0(meta)
            self._manifest.save()
            if self._sealed_mg is mg:
                self._sealed_mg = None
            self._publish_locked()
            self._mutation.notify_all()
        self._compact_event.set()
        return fid

    def _compact_loop(self):
        while True:
            self._compact_event.wait()
            self._compact_event.clear()
            if self._closed:
                return
            try:
                while self.compact_now() is not None:
                    if self._closed:
                        return
            except Exception:
                logger.exception("compaction failed; inputs untouched")

    def compact_now(self, update_hook=None):
        """Pick and run one compaction synchronously.  Returns the job or
        None if nothing is over budget.  update_hook(vertex), if given, is
        called after each per-vertex index update (tests use it to observe
        the mid-update protocol states)."""
        with self._mutation:
            job = levels_mod.pick_compaction(self._manifest,
                                             self.config.l0_limit,
                                             self.config.level_capacity,
                                             self.config.max_levels)
            if job is None:
                return None
            creation_ts = self._last_ts

        def alloc_fid():
            with self._mutation:
                return self._manifest.allocate_fid()

        bottom = job.target_level >= self.config.max_levels
        result = levels_mod.compact(
            job, self._readers.get, self.config.data_dir, alloc_fid,
            self.config.segment_target_bytes, bottom,
            self._versions.oldest_active_tau(), creation_ts,
            self.config.bloom_bits_per_key, self.counters)

        input_fids = job.input_fids
        new_min = job.max_upper_l0_fid + 1 if job.source_level == 0 else None
        for v in sorted(result.positions):
            with self._stripes.write(v):
                _, old_positions = self._index.get(v)
                kept = [p for p in old_positions if p.fid not in input_fids]
                tgt = result.positions[v]
                if tgt is not None:
                    fid, off, cnt = tgt
                    kept.append(Position(job.target_level, fid, off, cnt))
                self._index.set_positions(v, kept, new_min)
            if update_hook is not None:
                update_hook(v)

        with self._mutation:
            self._manifest.apply_compaction(job.source_level, input_fids,
                                            result.outputs)
            self._manifest.save()
            self._publish_locked()
            self._pending_delete.update(input_fids)
        self._gc_files()
        return job

    def _gc_files(self):
        with self._mutation:
            live = self._versions.live_l0_fids() | self._manifest.live_fids()
            for fid in list(self._pending_delete):
                if fid in live:
                    continue
                self._pending_delete.discard(fid)
                self._readers.retire(fid)
                for path in (edge_path(self.config.data_dir, fid),
                             prop_path(self.config.data_dir, fid)):
                    try:
                        os.unlink(path)
                    except OSError:
                        pass
        if self._versions.oldest_active_tau() is None:
            self._readers.close_retired()

    def flush_all(self) -> None:
        """Seal and flush everything buffered in memory; blocks until the
        store is fully durable."""
        with self._mutation:
            if not self._active_mg.is_empty():
                while self._sealed_mg is not None:
                    self._mutation.wait()
                mg = self._active_mg
                mg.seal()
                if self.config.background:
                    self._sealed_mg = mg
                    self._active_mg = self._new_memgraph()
                    self._publish_locked()
                    self._flush_queue.put(mg)
                else:
                    self._active_mg = self._new_memgraph()
                    self._publish_locked()
                    self._flush_memgraph(mg)
            while self._sealed_mg is not None:
                self._mutation.wait()

    # -- stats / lifecycle ------------------------------------------------------

    def stats(self) -> dict:
        p50, p99 = self.counters.write_latency_percentiles()
        with self._mutation:
            per_level = {lvl: (len(segs), sum(s.nbytes for s in segs))
                         for lvl, segs in sorted(self._manifest.levels.items())
                         if segs}
        out = self.counters.snapshot()
        out.update({"write_p50_s": p50, "write_p99_s": p99,
                    "levels": per_level})
        return out

    def memgraph_introspect(self, src: int) -> Optional[str]:
        """Storage mode ('arena'/'skiplist') of src in the current
        MemGraphs, for tests."""
        with self._mutation:
            mgs = (self._active_mg,) + ((self._sealed_mg,) if self._sealed_mg else ())
        for mg in mgs:
            mode = mg.storage_mode(src)
            if mode:
                return mode
        return None

    def index_introspect(self, src: int) -> dict:
        return self._index.entry_layout(src)

    def close(self) -> None:
        if self._closed:
            return
        if self.config.flush_on_close:
            self.flush_all()
        self._closed = True
        if self._threads:
            self._flush_queue.put(None)
            self._compact_event.set()
            for t in self._threads:
                t.join(timeout=30)
        self._vertices.close()
        self._readers.close_all()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def open_engine(config: EngineConfig) -> Engine:
    return Engine(config)
