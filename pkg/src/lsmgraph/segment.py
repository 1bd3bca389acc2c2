"""Immutable on-disk CSR segment: builder and reader.

A segment is a file pair.  ``<fid>.edge`` holds
``[header 64B][bloom][offsets: 16B each][bodies: 32B each][crc32 4B]``
and ``<fid>.prop`` is a concatenation of ``{u32 len, bytes}`` entries.
All integers little-endian.  Files never change after build; readers
share a segment freely across threads.

The offsets section is deliberately *not* cached in memory: locating a
vertex without an index position costs an on-disk binary search, which is
exactly the read amplification the multi-level index removes.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bloom import BloomFilter
from .hashing import edge_key, edge_keys_np
from .iostats import Counters

MAGIC = b"LSMG"
FORMAT_VERSION = 1
HEADER_FMT = "<4sHHQQQQQQ8x"
HEADER_BYTES = struct.calcsize(HEADER_FMT)  # 64
assert HEADER_BYTES == 64

BODY_DTYPE = np.dtype([("dst", "<u8"), ("ts", "<u8"),
                       ("prop", "<u8"), ("marker", "<u8")])
OFFSET_DTYPE = np.dtype([("src", "<u8"), ("off", "<u8")])
BODY_BYTES = 32
OFFSET_BYTES = 16

NO_PROP = (1 << 64) - 1  # sentinel: edge carries no property


class CorruptSegment(Exception):
    pass


@dataclass(frozen=True)
class SegmentMeta:
    fid: int
    min_src: int
    max_src: int
    body_count: int
    nbytes: int


def edge_path(data_dir: str, fid: int) -> str:
    return os.path.join(data_dir, f"{fid}.edge")


def prop_path(data_dir: str, fid: int) -> str:
    return os.path.join(data_dir, f"{fid}.prop")


def build_segment(data_dir: str, fid: int,
                  srcs: np.ndarray, dsts: np.ndarray, tss: np.ndarray,
                  markers: np.ndarray, props: Optional[list],
                  creation_ts: int, bloom_bits_per_key: int,
                  counters: Counters) -> tuple[SegmentMeta, list[tuple[int, int, int]]]:
    """Write one segment from record arrays already sorted by (src, dst, ts).

    props is a list of bytes|None aligned with the arrays, or None when no
    record carries a property.  Returns the segment metadata plus
    ``[(src, first_body_index, run_length), ...]`` for index maintenance.
    Both files appear atomically (temp + rename) or not at all.
    """
    n = len(srcs)
    if n == 0:
        raise ValueError("refusing to build an empty segment")
    srcs = np.ascontiguousarray(srcs, dtype=np.uint64)
    bodies = np.empty(n, dtype=BODY_DTYPE)
    bodies["dst"] = dsts
    bodies["ts"] = tss
    bodies["marker"] = np.asarray(markers, dtype=np.uint64)

    prop_buf = bytearray()
    if props is None:
        bodies["prop"] = NO_PROP
    else:
        prop_offsets = np.full(n, NO_PROP, dtype=np.uint64)
        for i, p in enumerate(props):
            if p is not None:
                prop_offsets[i] = len(prop_buf)
                prop_buf += struct.pack("<I", len(p))
                prop_buf += p
        bodies["prop"] = prop_offsets

    uniq, first = np.unique(srcs, return_index=True)
    offsets = np.empty(len(uniq), dtype=OFFSET_DTYPE)
    offsets["src"] = uniq
    offsets["off"] = first
    runs = np.diff(np.append(first, n))
    per_vertex = [(int(s), int(o), int(c))
                  for s, o, c in zip(uniq, first, runs)]

    bloom = BloomFilter.build(edge_keys_np(srcs, bodies["dst"]), bloom_bits_per_key)
    bloom_bytes = bloom.to_bytes()

    header = struct.pack(HEADER_FMT, MAGIC, FORMAT_VERSION, 0,
                         n, len(uniq), int(uniq[0]), int(uniq[-1]),
                         creation_ts, len(bloom_bytes))
    payload = header + bloom_bytes + offsets.tobytes() + bodies.tobytes()
    crc = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)

    epath = edge_path(data_dir, fid)
    ppath = prop_path(data_dir, fid)
    try:
        with open(epath + ".tmp", "wb") as f:
            f.write(payload)
            f.write(crc)
        with open(ppath + ".tmp", "wb") as f:
            f.write(bytes(prop_buf))
        os.replace(epath + ".tmp", epath)
        os.replace(ppath + ".tmp", ppath)
    except OSError:
        for p in (epath + ".tmp", ppath + ".tmp"):
            try:
                os.unlink(p)
            except OSError:
                pass
        raise
    counters.add_write(len(payload) + 4 + len(prop_buf))
    meta = SegmentMeta(fid=fid, min_src=int(uniq[0]), max_src=int(uniq[-1]),
                       body_count=n, nbytes=len(payload) + 4 + len(prop_buf))
    return meta, per_vertex


def build_from_records(data_dir: str, fid: int, records,
                       creation_ts: int, bloom_bits_per_key: int,
                       counters: Counters):
    """build_segment over an iterable of (src, dst, ts, prop, marker)
    tuples sorted by (src, dst, ts)."""
    srcs, dsts, tss, markers, props = [], [], [], [], []
    any_prop = False
    for src, dst, ts, prop, marker in records:
        srcs.append(src)
        dsts.append(dst)
        tss.append(ts)
        markers.append(1 if marker else 0)
        props.append(prop)
        any_prop = any_prop or prop is not None
    return build_segment(
        data_dir, fid,
        np.array(srcs, dtype=np.uint64), np.array(dsts, dtype=np.uint64),
        np.array(tss, dtype=np.uint64), np.array(markers, dtype=np.uint64),
        props if any_prop else None,
        creation_ts, bloom_bits_per_key, counters)


class CsrSegmentReader:
    """Shared, immutable reader for one segment file pair."""

    def __init__(self, data_dir: str, fid: int, counters: Counters,
                 verify_crc: bool = True):
        self.fid = fid
        self._counters = counters
        self._edge_fd = os.open(edge_path(data_dir, fid), os.O_RDONLY)
        self._prop_file = prop_path(data_dir, fid)
        self._prop_fd = -1
        self._closed = False
        try:
            raw = os.pread(self._edge_fd, HEADER_BYTES, 0)
            if len(raw) < HEADER_BYTES:
                raise CorruptSegment(f"fid {fid}: truncated header")
            (magic, version, _flags, self.body_count, self.offset_count,
             self.min_src, self.max_src, self.creation_ts,
             bloom_len) = struct.unpack(HEADER_FMT, raw)
            if magic != MAGIC or version != FORMAT_VERSION:
                raise CorruptSegment(f"fid {fid}: bad magic/version")
            if self.offset_count > self.body_count or self.min_src > self.max_src:
                raise CorruptSegment(f"fid {fid}: inconsistent header")
            self._off_start = HEADER_BYTES + bloom_len
            self._body_start = self._off_start + self.offset_count * OFFSET_BYTES
            self._end = self._body_start + self.body_count * BODY_BYTES
            size = os.fstat(self._edge_fd).st_size
            if size != self._end + 4:
                raise CorruptSegment(f"fid {fid}: section lengths do not match file size")
            self.bloom = BloomFilter.from_bytes(os.pread(self._edge_fd, bloom_len, HEADER_BYTES))
            counters.add_read(HEADER_BYTES + bloom_len)
            if verify_crc:
                payload = os.pread(self._edge_fd, self._end, 0)
                (stored,) = struct.unpack("<I", os.pread(self._edge_fd, 4, self._end))
                counters.add_read(self._end + 4)
                if zlib.crc32(payload) & 0xFFFFFFFF != stored:
                    raise CorruptSegment(f"fid {fid}: CRC mismatch")
        except BaseException:
            os.close(self._edge_fd)
            raise

    # -- lookups ---------------------------------------------------------

    def _offset_entry(self, idx: int) -> tuple[int, int]:
        raw = os.pread(self._edge_fd, OFFSET_BYTES, self._off_start + idx * OFFSET_BYTES)
        src, off = struct.unpack("<QQ", raw)
        return src, off

    def find_vertex(self, src: int) -> Optional[tuple[int, int]]:
        """On-disk binary search of the offsets section.  Returns
        (first_body_index, run_length) or None.  Counts as one block read
        when the range check does not reject outright."""
        if src < self.min_src or src > self.max_src:
            return None
        lo, hi = 0, self.offset_count - 1
        nread = 0
        found = -1
        off = 0
        while lo <= hi:
            mid = (lo + hi) // 2
            s, o = self._offset_entry(mid)
            nread += 1
            if s == src:
                found, off = mid, o
                break
            if s < src:
                lo = mid + 1
            else:
                hi = mid - 1
        if found < 0:
            self._counters.add_read(nread * OFFSET_BYTES, blocks=1)
            return None
        if found + 1 < self.offset_count:
            _, nxt = self._offset_entry(found + 1)
            nread += 1
        else:
            nxt = self.body_count
        self._counters.add_read(nread * OFFSET_BYTES, blocks=1)
        return off, nxt - off

    def read_run(self, offset: int, count: int) -> np.ndarray:
        """One sequential read of a vertex's body run."""
        if offset + count > self.body_count:
            raise CorruptSegment(f"fid {self.fid}: body run out of bounds")
        raw = os.pread(self._edge_fd, count * BODY_BYTES,
                       self._body_start + offset * BODY_BYTES)
        self._counters.add_read(len(raw), blocks=1)
        return np.frombuffer(raw, dtype=BODY_DTYPE)

    def read_adjacency(self, src: int) -> np.ndarray:
        loc = self.find_vertex(src)
        if loc is None:
            return np.empty(0, dtype=BODY_DTYPE)
        return self.read_run(*loc)

    def maybe_contains(self, src: int, dst: int) -> bool:
        return self.bloom.maybe_contains(edge_key(src, dst))

    def read_prop(self, prop_offset: int) -> bytes:
        if prop_offset == NO_PROP:
            return b""
        if self._prop_fd < 0:
            self._prop_fd = os.open(self._prop_file, os.O_RDONLY)
        raw = os.pread(self._prop_fd, 4, prop_offset)
        if len(raw) < 4:
            raise CorruptSegment(f"fid {self.fid}: property offset out of bounds")
        (plen,) = struct.unpack("<I", raw)
        data = os.pread(self._prop_fd, plen, prop_offset + 4)
        if len(data) < plen:
            raise CorruptSegment(f"fid {self.fid}: truncated property entry")
        self._counters.add_read(4 + plen, blocks=1)
        return data

    # -- bulk access (compaction, index rebuild) --------------------------

    def bulk_offsets(self) -> np.ndarray:
        raw = os.pread(self._edge_fd, self.offset_count * OFFSET_BYTES, self._off_start)
        self._counters.add_read(len(raw), blocks=1)
        return np.frombuffer(raw, dtype=OFFSET_DTYPE)

    def bulk_bodies(self) -> np.ndarray:
        raw = os.pread(self._edge_fd, self.body_count * BODY_BYTES, self._body_start)
        self._counters.add_read(len(raw), blocks=1)
        return np.frombuffer(raw, dtype=BODY_DTYPE)

    def offsets_table(self) -> list[tuple[int, int, int]]:
        """[(src, first_body_index, run_length), ...] in src order."""
        offs = self.bulk_offsets()
        runs = np.diff(np.append(offs["off"].astype(np.int64), self.body_count))
        return [(int(s), int(o), int(c))
                for s, o, c in zip(offs["src"], offs["off"], runs)]

    def bulk_props(self) -> bytes:
        with open(self._prop_file, "rb") as f:
            raw = f.read()
        self._counters.add_read(len(raw), blocks=1)
        return raw

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            os.close(self._edge_fd)
            if self._prop_fd >= 0:
                os.close(self._prop_fd)
