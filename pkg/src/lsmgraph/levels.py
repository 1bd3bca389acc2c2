"""Multi-level organization of CSR segments.

L0 accumulates whole-MemGraph flushes whose vertex ranges may overlap.
Each level below holds one logical CSR partitioned into range-disjoint
segments, every vertex confined to a single segment.  Compaction is a
merge by (src, dst, ts) that starts new output files only at vertex
boundaries.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .iostats import Counters
from .segment import (BODY_BYTES, NO_PROP, SegmentMeta, build_from_records,
                      build_segment, CsrSegmentReader, edge_path, prop_path)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "MANIFEST"

# sentinel: "no active snapshot", every record ts is below this
NO_SNAPSHOT_TAU = 1 << 62


class ManifestError(Exception):
    pass


@dataclass
class Manifest:
    """Registry of live segments per level plus the fid allocator.

    Rewritten atomically on every flush/compaction commit; on disk it only
    ever names fully written files.
    """
    data_dir: str
    levels: dict[int, list[SegmentMeta]] = field(default_factory=dict)
    next_fid: int = 1

    @property
    def path(self) -> str:
        return os.path.join(self.data_dir, MANIFEST_NAME)

    @classmethod
    def load(cls, data_dir: str) -> "Manifest":
        m = cls(data_dir)
        if not os.path.exists(m.path):
            return m
        with open(m.path, "r", encoding="ascii") as f:
            for line in f:
                parts = line.split()
                if not parts:
                    continue
                if parts[0] == "next_fid":
                    m.next_fid = int(parts[1])
                    continue
                if len(parts) != 6:
                    raise ManifestError(f"bad manifest line: {line!r}")
                level, fid, mn, mx, cnt, nbytes = (int(p) for p in parts)
                m.levels.setdefault(level, []).append(
                    SegmentMeta(fid, mn, mx, cnt, nbytes))
        for level, segs in m.levels.items():
            if level == 0:
                segs.sort(key=lambda s: s.fid)
            else:
                segs.sort(key=lambda s: s.min_src)
        return m

    def save(self) -> None:
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="ascii") as f:
            for level in sorted(self.levels):
                for s in self.levels[level]:
                    f.write(f"{level} {s.fid} {s.min_src} {s.max_src} "
                            f"{s.body_count} {s.nbytes}\n")
            f.write(f"next_fid {self.next_fid}\n")
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, self.path)

    def allocate_fid(self) -> int:
        fid = self.next_fid
        self.next_fid += 1
        return fid

    def add_l0(self, meta: SegmentMeta) -> None:
        self.levels.setdefault(0, []).append(meta)

    def apply_compaction(self, source_level: int,
                         input_fids: set[int],
                         outputs: list[SegmentMeta]) -> None:
        target = source_level + 1
        for level in (source_level, target):
            segs = [s for s in self.levels.get(level, []) if s.fid not in input_fids]
            self.levels[level] = segs
        self.levels[target].extend(outputs)
        self.levels[target].sort(key=lambda s: s.min_src)

    def level_bytes(self, level: int) -> int:
        return sum(s.nbytes for s in self.levels.get(level, []))

    def all_segments(self) -> list[tuple[int, SegmentMeta]]:
        return [(lvl, s) for lvl in sorted(self.levels)
                for s in self.levels[lvl]]

    def live_fids(self) -> set[int]:
        return {s.fid for _, s in self.all_segments()}


@dataclass(frozen=True)
class CompactionJob:
    source_level: int
    inputs_upper: tuple[int, ...]
    inputs_lower: tuple[int, ...]
    max_upper_l0_fid: int = 0  # meaningful only when source_level == 0

    @property
    def input_fids(self) -> set[int]:
        return set(self.inputs_upper) | set(self.inputs_lower)

    @property
    def target_level(self) -> int:
        return self.source_level + 1


def _overlaps(a: SegmentMeta, lo: int, hi: int) -> bool:
    return a.min_src <= hi and a.max_src >= lo


def pick_compaction(manifest: Manifest, l0_limit: int,
                    level_capacity: Callable[[int], int],
                    max_levels: int) -> Optional[CompactionJob]:
    """L0 first: once the file count hits the limit, take the transitive
    closure of range-overlapping L0 files (seeded at the oldest file) plus
    the intersecting L1 segments.  Otherwise compact the first over-budget
    level, smallest level number first; the bottom level is never a
    source."""
    l0 = manifest.levels.get(0, [])
    if len(l0) >= l0_limit:
        group = [min(l0, key=lambda s: s.fid)]
        lo, hi = group[0].min_src, group[0].max_src
        rest = [s for s in l0 if s is not group[0]]
        changed = True
        while changed:
            changed = False
            for s in list(rest):
                if _overlaps(s, lo, hi):
                    group.append(s)
                    rest.remove(s)
                    lo, hi = min(lo, s.min_src), max(hi, s.max_src)
                    changed = True
        lower = [s.fid for s in manifest.levels.get(1, []) if _overlaps(s, lo, hi)]
        return CompactionJob(0, tuple(s.fid for s in group), tuple(lower),
                             max_upper_l0_fid=max(s.fid for s in group))
    for level in range(1, max_levels):
        if manifest.level_bytes(level) > level_capacity(level):
            segs = manifest.levels.get(level, [])
            if not segs:
                continue
            upper = segs[0]  # first in range order
            lower = [s.fid for s in manifest.levels.get(level + 1, [])
                     if _overlaps(s, upper.min_src, upper.max_src)]
            return CompactionJob(level, (upper.fid,), tuple(lower))
    return None


def flush_memgraph(mg, data_dir: str, fid: int, creation_ts: int,
                   bloom_bits_per_key: int, counters: Counters) -> SegmentMeta:
    """Build one L0 segment from a sealed MemGraph's drain."""
    meta, _ = build_from_records(data_dir, fid, mg.drain_sorted(),
                                 creation_ts, bloom_bits_per_key, counters)
    return meta


def _read_prop(blob: bytes, off: int) -> bytes:
    (plen,) = struct.unpack_from("<I", blob, off)
    return blob[off + 4: off + 4 + plen]


@dataclass
class CompactionResult:
    outputs: list[SegmentMeta]
    # src -> (fid, first_body_index, run_length) in the output files;
    # affected vertices whose records were fully garbage-collected map to None
    positions: dict[int, Optional[tuple[int, int, int]]]


def compact(job: CompactionJob,
            get_reader: Callable[[int], CsrSegmentReader],
            data_dir: str,
            alloc_fid: Callable[[], int],
            target_bytes: int,
            bottom_level: bool,
            oldest_tau: Optional[int],
            creation_ts: int,
            bloom_bits_per_key: int,
            counters: Counters) -> CompactionResult:
    """Merge the job's input segments into new target-level segments.

    All records of one source vertex land in one output; an output closes
    only at a vertex boundary once it reaches target_bytes, so a vertex
    larger than the target gets a segment of its own.

    Garbage collection: obsolete versions below the oldest active snapshot
    are dropped; tombstones survive above the bottom level unconditionally
    and are dropped at the bottom only when no active snapshot predates
    them (together with everything they mask).

    Inputs are untouched; on failure the partial outputs are discarded.
    """
    tau = NO_SNAPSHOT_TAU if oldest_tau is None else oldest_tau

    srcs_parts, bodies_parts, file_idx_parts = [], [], []
    blobs: list[Optional[bytes]] = []
    affected: set[int] = set()
    input_fids = list(job.inputs_upper) + list(job.inputs_lower)
    for i, fid in enumerate(input_fids):
        r = get_reader(fid)
        offs = r.bulk_offsets()
        bodies = r.bulk_bodies()
        runs = np.diff(np.append(offs["off"].astype(np.int64), r.body_count))
        srcs = np.repeat(offs["src"], runs)
        affected.update(int(s) for s in offs["src"])
        srcs_parts.append(srcs)
        bodies_parts.append(bodies)
        file_idx_parts.append(np.full(len(bodies), i, dtype=np.uint32))
        blobs.append(r.bulk_props() if bool(np.any(bodies["prop"] != NO_PROP)) else None)

    srcs = np.concatenate(srcs_parts)
    bodies = np.concatenate(bodies_parts)
    fidx = np.concatenate(file_idx_parts)
    order = np.lexsort((bodies["ts"], bodies["dst"], srcs))
    srcs, bodies, fidx = srcs[order], bodies[order], fidx[order]
    dsts, tss, markers = bodies["dst"], bodies["ts"], bodies["marker"]

    keep = _retention_mask(srcs, dsts, tss, markers, tau, bottom_level)
    srcs, bodies, fidx = srcs[keep], bodies[keep], fidx[keep]

    positions: dict[int, Optional[tuple[int, int, int]]] = {v: None for v in affected}
    outputs: list[SegmentMeta] = []
    if len(srcs) == 0:
        return CompactionResult(outputs, positions)

    uniq, first = np.unique(srcs, return_index=True)
    runs = np.diff(np.append(first, len(srcs)))

    # slice [a, b) boundaries such that files close only between vertices
    cut_points = [0]
    cur = 0
    for f, c in zip(first, runs):
        if cur and cur + c * BODY_BYTES > target_bytes:
            cut_points.append(int(f))
            cur = 0
        cur += int(c) * BODY_BYTES
    cut_points.append(len(srcs))

    built: list[tuple[str, str, str, str]] = []  # tmp/final path pairs for rollback
    try:
        for a, b in zip(cut_points, cut_points[1:]):
            if a == b:
                continue
            fid = alloc_fid()
            sl_bodies = bodies[a:b]
            props = None
            if any(blobs[i] is not None for i in np.unique(fidx[a:b])):
                props = [None if off == NO_PROP else _read_prop(blobs[fi], int(off))
                         for fi, off in zip(fidx[a:b], sl_bodies["prop"])]
            meta, per_vertex = build_segment(
                data_dir, fid, srcs[a:b], sl_bodies["dst"], sl_bodies["ts"],
                sl_bodies["marker"], props, creation_ts, bloom_bits_per_key,
                counters)
            outputs.append(meta)
            for v, off, cnt in per_vertex:
                positions[v] = (fid, off, cnt)
    except BaseException:
        for meta in outputs:
            for path in (edge_path(data_dir, meta.fid), prop_path(data_dir, meta.fid)):
                try:
                    os.unlink(path)
                except OSError:
                    pass
        raise
    return CompactionResult(outputs, positions)


def _retention_mask(srcs, dsts, tss, markers, tau, bottom_level) -> np.ndarray:
    """Per (src, dst) group sorted by ts ascending: keep every record newer
    than tau plus the newest at-or-below tau; above the bottom level also
    keep every tombstone; at the bottom drop a leading tombstone no active
    snapshot can still see."""
    n = len(srcs)
    idxs = np.arange(n, dtype=np.int64)
    new_group = np.empty(n, dtype=bool)
    new_group[0] = True
    new_group[1:] = (srcs[1:] != srcs[:-1]) | (dsts[1:] != dsts[:-1])
    starts = np.flatnonzero(new_group)

    keep = tss > tau
    cand = np.where(tss <= tau, idxs, -1)
    last_leq = np.maximum.reduceat(cand, starts)
    keep[last_leq[last_leq >= 0]] = True
    is_tomb = markers.astype(bool)
    if not bottom_level:
        keep |= is_tomb
    else:
        fk = np.minimum.reduceat(np.where(keep, idxs, n), starts)
        fk = fk[fk < n]
        droppable = fk[is_tomb[fk] & (tss[fk] <= tau)]
        keep[droppable] = False
    return keep
