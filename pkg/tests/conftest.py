import random

import pytest

from lsmgraph import Engine, EngineConfig


@pytest.fixture
def data_dir(tmp_path):
    return str(tmp_path / "store")


@pytest.fixture
def small_engine(data_dir):
    """Tiny budgets so flush/compaction trigger within a few hundred edges."""
    eng = Engine(EngineConfig(
        data_dir=data_dir, memgraph_bytes=4096, segment_target_bytes=2048,
        l0_limit=2, level_factor=4, max_levels=3, background=False))
    yield eng
    eng.close()


def make_engine(data_dir, **overrides) -> Engine:
    kw = dict(data_dir=data_dir, memgraph_bytes=4096,
              segment_target_bytes=2048, l0_limit=2, level_factor=4,
              max_levels=3, background=False)
    kw.update(overrides)
    return Engine(EngineConfig(**kw))


def random_ops(seed: int, n: int, vertices: int, delete_every: int = 20):
    """('i', src, dst, prop) / ('d', src, dst) op stream, deterministic."""
    rng = random.Random(seed)
    ops = []
    inserted = []
    for i in range(n):
        if delete_every and inserted and i % delete_every == delete_every - 1:
            src, dst = inserted[rng.randrange(len(inserted))]
            ops.append(("d", src, dst))
        else:
            src = rng.randrange(vertices)
            dst = rng.randrange(vertices)
            prop = bytes([i % 251]) if rng.random() < 0.25 else None
            ops.append(("i", src, dst, prop))
            inserted.append((src, dst))
            if len(inserted) > 2048:
                del inserted[:1024]
    return ops


def apply_ops(engine, oracle, ops, compact_every: int = 0):
    """Feed ops to engine and oracle; optionally run compactions inline."""
    for i, op in enumerate(ops):
        if op[0] == "i":
            ts = engine.insert_edge(op[1], op[2], op[3])
            oracle.insert(op[1], op[2], ts, op[3])
        else:
            ts = engine.delete_edge(op[1], op[2])
            if ts is not None:
                oracle.delete(op[1], op[2], ts)
        if compact_every and i % compact_every == compact_every - 1:
            while engine.compact_now() is not None:
                pass
