import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsmgraph.iostats import Counters
from lsmgraph.segment import (NO_PROP, CorruptSegment, CsrSegmentReader,
                              build_from_records, build_segment, edge_path)


def _build(tmp_path, records, fid=1, creation_ts=99):
    counters = Counters()
    meta, per_vertex = build_from_records(str(tmp_path), fid, records,
                                          creation_ts, 10, counters)
    return meta, per_vertex, counters


def test_roundtrip_basic(tmp_path):
    records = [
        (1, 5, 10, None, False),
        (1, 6, 11, b"ab", False),
        (3, 2, 12, None, True),
    ]
    meta, per_vertex, counters = _build(tmp_path, records)
    assert (meta.min_src, meta.max_src, meta.body_count) == (1, 3, 3)
    assert per_vertex == [(1, 0, 2), (3, 2, 1)]

    r = CsrSegmentReader(str(tmp_path), 1, counters)
    assert r.creation_ts == 99
    adj = r.read_adjacency(1)
    assert [int(b["dst"]) for b in adj] == [5, 6]
    assert [int(b["ts"]) for b in adj] == [10, 11]
    assert int(adj[0]["prop"]) == NO_PROP
    assert r.read_prop(int(adj[1]["prop"])) == b"ab"
    tomb = r.read_adjacency(3)
    assert bool(tomb[0]["marker"])
    assert len(r.read_adjacency(2)) == 0  # absent vertex
    r.close()


def test_find_vertex_costs_one_block(tmp_path):
    records = [(v, v + 1, v + 1, None, False) for v in range(100)]
    meta, per_vertex, counters = _build(tmp_path, records)
    r = CsrSegmentReader(str(tmp_path), 1, counters)
    before = counters.snapshot()["blocks_read"]
    hit = r.find_vertex(50)
    after = counters.snapshot()["blocks_read"]
    assert hit == (50, 1)  # (first body index, run length)
    assert after - before == 1
    r.close()


def test_indexed_read_run(tmp_path):
    records = [(7, d, d + 1, None, False) for d in range(10)]
    meta, per_vertex, counters = _build(tmp_path, records)
    (src, off, cnt), = per_vertex
    r = CsrSegmentReader(str(tmp_path), 1, counters)
    before = counters.snapshot()["blocks_read"]
    bodies = r.read_run(off, cnt)
    assert counters.snapshot()["blocks_read"] - before == 1
    assert [int(b["dst"]) for b in bodies] == list(range(10))
    r.close()


def test_bloom_gates_membership(tmp_path):
    records = [(1, 2, 1, None, False), (1, 4, 2, None, False)]
    meta, _, counters = _build(tmp_path, records)
    r = CsrSegmentReader(str(tmp_path), 1, counters)
    assert r.maybe_contains(1, 2)
    assert r.maybe_contains(1, 4)
    r.close()


def test_crc_corruption_detected(tmp_path):
    records = [(1, 2, 1, None, False)]
    _build(tmp_path, records)
    path = edge_path(str(tmp_path), 1)
    raw = bytearray(open(path, "rb").read())
    raw[70] ^= 0xFF  # flip a byte inside the payload
    with open(path, "wb") as f:
        f.write(raw)
    with pytest.raises(CorruptSegment):
        CsrSegmentReader(str(tmp_path), 1, Counters())


def test_truncated_file_detected(tmp_path):
    records = [(1, 2, 1, None, False)]
    _build(tmp_path, records)
    path = edge_path(str(tmp_path), 1)
    raw = open(path, "rb").read()
    with open(path, "wb") as f:
        f.write(raw[:40])
    with pytest.raises(CorruptSegment):
        CsrSegmentReader(str(tmp_path), 1, Counters())


def test_empty_segment_rejected(tmp_path):
    with pytest.raises(ValueError):
        build_from_records(str(tmp_path), 1, [], 0, 10, Counters())


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20),
                          st.one_of(st.none(), st.binary(max_size=6)),
                          st.booleans()),
                min_size=1, max_size=80))
def test_roundtrip_property(tmp_path_factory, rows):
    """Any sorted record batch survives a write/read cycle exactly."""
    tmp = tmp_path_factory.mktemp("seg")
    records = sorted(
        [(s, d, ts + 1, p, m) for ts, (s, d, p, m) in enumerate(rows)],
        key=lambda r: (r[0], r[1], r[2]))
    counters = Counters()
    meta, per_vertex, _ = _build(tmp, records)
    r = CsrSegmentReader(str(tmp), 1, counters)
    got = []
    for src, off, cnt in per_vertex:
        for b in r.read_run(off, cnt):
            prop = None if int(b["prop"]) == NO_PROP else r.read_prop(int(b["prop"]))
            got.append((src, int(b["dst"]), int(b["ts"]), prop, bool(b["marker"])))
    assert got == records
    r.close()
