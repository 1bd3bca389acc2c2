import random

from hypothesis import given, settings
from hypothesis import strategies as st

from lsmgraph.mlindex import (INITIAL_INTERVAL, MultiLevelIndex, Position,
                              _PageSet)


def P(level, fid=1, off=0, cnt=1):
    return Position(level, fid, off, cnt)


def test_empty_get():
    idx = MultiLevelIndex()
    assert idx.get(5) == (0, [])


def test_inline_two_positions():
    idx = MultiLevelIndex()
    idx.set_positions(3, [P(2), P(1)])
    min_l0, positions = idx.get(3)
    assert [p.level for p in positions] == [1, 2]
    assert idx.entry_layout(3)["slot3_tag"] in ("position", "empty")
    assert idx.page_count() == 0


def test_overflow_to_page_keeps_bottom_inline():
    idx = MultiLevelIndex()
    idx.set_positions(3, [P(1), P(2), P(3), P(4)])
    layout = idx.entry_layout(3)
    assert layout["slot3_tag"] == "page"
    assert layout["slot2"].level == 4  # bottom-most level stays inline
    min_l0, positions = idx.get(3)
    assert [p.level for p in positions] == [1, 2, 3, 4]
    assert idx.page_count() == 1


def test_shrink_back_inline_releases_page():
    idx = MultiLevelIndex()
    idx.set_positions(3, [P(1), P(2), P(3)])
    assert idx.page_count() == 1
    idx.set_positions(3, [P(4)])
    assert idx.page_count() == 0
    assert idx.get(3)[1] == [P(4)]


def test_min_l0_fid_updates_only_when_given():
    idx = MultiLevelIndex()
    idx.set_positions(1, [P(1)], min_l0_fid=7)
    assert idx.get(1)[0] == 7
    idx.set_positions(1, [P(2)])  # level compaction: min untouched
    assert idx.get(1)[0] == 7
    idx.set_positions(1, [P(2)], min_l0_fid=9)
    assert idx.get(1)[0] == 9


def test_entry_removed_when_empty():
    idx = MultiLevelIndex()
    idx.set_positions(1, [P(1)])
    idx.set_positions(1, [])
    assert not idx.entry_layout(1)["present"]
    assert idx.get(1) == (0, [])


def test_min_l0_survives_empty_positions():
    idx = MultiLevelIndex()
    idx.set_positions(1, [], min_l0_fid=5)
    assert idx.get(1) == (5, [])
    assert idx.entry_layout(1)["present"]


def test_page_split_keeps_refs_valid():
    idx = MultiLevelIndex()
    # enough distinct vertices with >2 positions to force page splits
    vertices = list(range(0, INITIAL_INTERVAL, 2))
    for v in vertices:
        idx.set_positions(v, [P(1, fid=v), P(2, fid=v), P(3, fid=v)])
    assert idx.page_count() >= 2  # at least one split happened
    for v in vertices:
        _, positions = idx.get(v)
        assert [p.fid for p in positions] == [v, v, v]


def test_page_merge_on_shrink():
    idx = MultiLevelIndex()
    vertices = list(range(0, INITIAL_INTERVAL, 2))
    for v in vertices:
        idx.set_positions(v, [P(1, fid=v), P(2, fid=v), P(3, fid=v)])
    peak = idx.page_count()
    for v in vertices[: len(vertices) * 9 // 10]:
        idx.set_positions(v, [])
    assert idx.page_count() < peak
    for v in vertices[len(vertices) * 9 // 10:]:
        assert [p.fid for p in idx.get(v)[1]] == [v, v, v]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 400),
                          st.lists(st.integers(1, 5), unique=True,
                                   max_size=5)),
                min_size=1, max_size=150))
def test_index_matches_dict_model(updates):
    """set_positions/get behave exactly like a plain dict of lists."""
    idx = MultiLevelIndex()
    model = {}
    for v, levels in updates:
        positions = [P(lvl, fid=v * 10 + lvl) for lvl in levels]
        idx.set_positions(v, positions)
        model[v] = sorted(positions, key=lambda p: p.level)
    for v, want in model.items():
        _, got = idx.get(v)
        assert got == want
