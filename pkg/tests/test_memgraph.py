import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsmgraph.memgraph import (MemGraph, MemGraphFull, MemGraphSealed,
                               MODE_ARENA, MODE_SKIPLIST)

BIG = 1 << 20


def test_insert_and_scan_basic():
    mg = MemGraph(BIG)
    mg.insert(1, 2, None, 10, False)
    mg.insert(1, 3, b"x", 11, False)
    assert mg.scan(1, 100) == [(2, None), (3, b"x")]
    assert mg.scan(1, 10) == [(2, None)]  # ts 11 not visible at tau=10


def test_tombstone_masks_older_versions():
    mg = MemGraph(BIG)
    mg.insert(1, 2, None, 10, False)
    mg.insert(1, 2, None, 11, True)   # delete
    mg.insert(1, 2, b"y", 12, False)  # re-insert
    assert mg.scan(1, 10) == [(2, None)]
    assert mg.scan(1, 11) == []
    assert mg.scan(1, 12) == [(2, b"y")]


def test_collect_includes_tombstones():
    mg = MemGraph(BIG)
    mg.insert(1, 2, None, 10, False)
    mg.insert(1, 2, None, 11, True)
    recs = mg.collect(1, 100)
    assert (2, 10, None, False) in recs
    assert (2, 11, None, True) in recs


def test_degree_dichotomy_migration():
    mg = MemGraph(BIG, segment_records=4)
    for i in range(4):
        mg.insert(7, i, None, i + 1, False)
    assert mg.storage_mode(7) == MODE_ARENA
    assert mg.degree(7) == 4
    mg.insert(7, 99, None, 5, False)  # degree 5 > 4: migrate
    assert mg.storage_mode(7) == MODE_SKIPLIST
    assert mg.degree(7) == 5
    assert [d for d, _ in mg.scan(7, 100)] == [0, 1, 2, 3, 99]


def test_full_raises_and_keeps_data():
    mg = MemGraph(300)  # tiny budget: a few records only
    inserted = []
    ts = 0
    with pytest.raises(MemGraphFull):
        for i in range(1000):
            ts += 1
            mg.insert(i, i + 1, None, ts, False)
            inserted.append(i)
    assert inserted  # first record must always fit
    for i in inserted:
        assert mg.scan(i, ts) == [(i + 1, None)]
    assert mg.memory_usage() <= 300 + 200  # budget plus one-record slack


def test_sealed_rejects_writes():
    mg = MemGraph(BIG)
    mg.insert(1, 2, None, 1, False)
    mg.seal()
    with pytest.raises(MemGraphSealed):
        mg.insert(1, 3, None, 2, False)


def test_drain_sorted_order():
    mg = MemGraph(BIG)
    mg.insert(5, 9, None, 1, False)
    mg.insert(1, 7, None, 2, False)
    mg.insert(5, 2, b"p", 3, False)
    mg.insert(1, 7, None, 4, True)
    mg.seal()
    recs = list(mg.drain_sorted())
    keys = [(r[0], r[1], r[2]) for r in recs]
    assert keys == sorted(keys)
    assert keys == [(1, 7, 2), (1, 7, 4), (5, 2, 3), (5, 9, 1)]


def test_max_ts_and_counts():
    mg = MemGraph(BIG)
    assert mg.is_empty()
    mg.insert(1, 2, None, 5, False)
    mg.insert(3, 4, None, 9, False)
    assert mg.max_ts() == 9
    assert mg.record_count() == 2
    assert not mg.is_empty()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10), st.integers(0, 10),
                          st.booleans()), min_size=1, max_size=120),
       st.integers(1, 130))
def test_scan_matches_model(ops, tau):
    """MemGraph.scan == newest-wins model over a plain dict."""
    mg = MemGraph(BIG)
    model = {}
    for ts, (src, dst, is_del) in enumerate(ops, start=1):
        mg.insert(src, dst, None, ts, is_del)
        model[(src, dst, ts)] = is_del
    for src in range(11):
        expect = {}
        for (s, d, ts), is_del in model.items():
            if s == src and ts <= tau:
                cur = expect.get(d)
                if cur is None or ts > cur[0]:
                    expect[d] = (ts, is_del)
        want = sorted(d for d, (_, is_del) in expect.items() if not is_del)
        assert [d for d, _ in mg.scan(src, tau)] == want


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)),
                min_size=1, max_size=60))
def test_dichotomy_invariant(edges):
    mg = MemGraph(BIG, segment_records=4)
    for ts, (src, dst) in enumerate(edges, start=1):
        mg.insert(src, dst, None, ts, False)
    for v in mg.vertices():
        mode = mg.storage_mode(v)
        if mg.degree(v) <= 4:
            assert mode == MODE_ARENA
        else:
            assert mode == MODE_SKIPLIST
