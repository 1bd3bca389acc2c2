"""Snapshot-isolated analytics: BFS, SSSP, weakly connected components,
and a full-graph scan.  Every algorithm reads exclusively through a single
snapshot handle, so results are stable under concurrent writes."""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np

from .engine import Engine
from .hashing import splitmix64
from .versioning import SnapshotHandle

UNREACHED = -1  # sentinel for bfs levels / cc labels of untouched vertices


@dataclass
class AnalysisResult:
    name: str
    tau: int
    values: np.ndarray            # per-vertex output, indexed by vertex id
    visited: int = 0
    edges_scanned: int = 0
    elapsed_s: float = 0.0
    extra: dict = field(default_factory=dict)


def _vertex_count(engine: Engine) -> int:
    return engine.max_vertex_id() + 1


def bfs(engine: Engine, handle: SnapshotHandle, source: int) -> AnalysisResult:
    """Hop distance from source; UNREACHED for vertices not reached."""
    t0 = time.perf_counter()
    n = _vertex_count(engine)
    level = np.full(max(n, source + 1), UNREACHED, dtype=np.int64)
    edges = 0
    visited = 0
    if source < len(level):
        level[source] = 0
        frontier = [source]
        visited = 1
        depth = 0
        while frontier:
            depth += 1
            nxt = []
            for u in frontier:
                for v, _ in engine.scan_neighbors(u, handle, ordered=False):
                    edges += 1
                    if v >= len(level):
                        level = np.concatenate(
                            [level, np.full(v + 1 - len(level), UNREACHED,
                                            dtype=np.int64)])
                    if level[v] == UNREACHED:
                        level[v] = depth
                        visited += 1
                        nxt.append(v)
            frontier = nxt
    return AnalysisResult("bfs", handle.tau, level, visited, edges,
                          time.perf_counter() - t0)


def decode_weight(prop: bytes | None) -> float:
    """Edge weight: 8-byte little-endian float property, 1.0 when absent."""
    if prop is None or len(prop) != 8:
        return 1.0
    return float(np.frombuffer(prop, dtype="<f8")[0])


def sssp(engine: Engine, handle: SnapshotHandle, source: int) -> AnalysisResult:
    """Dijkstra distances from source; inf for unreached.  Raises
    ValueError on a negative edge weight."""
    t0 = time.perf_counter()
    n = max(_vertex_count(engine), source + 1)
    dist = np.full(n, np.inf, dtype=np.float64)
    dist[source] = 0.0
    heap = [(0.0, source)]
    edges = 0
    visited = 0
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        visited += 1
        for v, prop in engine.scan_neighbors(u, handle, ordered=False,
                                             with_props=True):
            edges += 1
            w = decode_weight(prop)
            if w < 0:
                raise ValueError(f"negative weight on edge ({u}, {v}): {w}")
            if v >= len(dist):
                grown = np.full(v + 1, np.inf, dtype=np.float64)
                grown[:len(dist)] = dist
                dist = grown
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return AnalysisResult("sssp", handle.tau, dist, visited, edges,
                          time.perf_counter() - t0)


def cc(engine: Engine, handle: SnapshotHandle) -> AnalysisResult:
    """Weakly connected components (edges treated as undirected).  values[v]
    is the smallest vertex id in v's component; UNREACHED for ids that are
    not live vertices.  extra['components'] counts distinct components."""
    t0 = time.perf_counter()
    n = _vertex_count(engine)
    parent = np.arange(max(n, 1), dtype=np.int64)

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(a: int, b: int):
        ra, rb = find(a), find(b)
        if ra != rb:
            if ra > rb:
                ra, rb = rb, ra
            parent[rb] = ra

    edges = 0
    live = [v for v in range(n) if engine.is_live_vertex(v)]
    for u in live:
        for v, _ in engine.scan_neighbors(u, handle, ordered=False):
            edges += 1
            if v < len(parent):
                union(u, v)
    labels = np.full(max(n, 1), UNREACHED, dtype=np.int64)
    roots = set()
    for v in live:
        r = find(v)
        labels[v] = r
        roots.add(r)
    return AnalysisResult("cc", handle.tau, labels[:n], len(live), edges,
                          time.perf_counter() - t0,
                          extra={"components": len(roots)})


def scan_all(engine: Engine, handle: SnapshotHandle) -> AnalysisResult:
    """Full scan of all visible edges: returns the edge count and an
    order-independent checksum (xor of per-edge hashes), so two scans of
    the same snapshot compare equal byte-for-byte."""
    t0 = time.perf_counter()
    n = _vertex_count(engine)
    count = 0
    checksum = 0
    degrees = np.zeros(max(n, 1), dtype=np.int64)
    for u in range(n):
        neigh = engine.scan_neighbors(u, handle, ordered=False)
        degrees[u] = len(neigh)
        count += len(neigh)
        for v, _ in neigh:
            checksum ^= splitmix64((u << 32) ^ (u >> 32) ^ splitmix64(v))
    return AnalysisResult("scan_all", handle.tau, degrees[:n], n, count,
                          time.perf_counter() - t0,
                          extra={"edge_count": count, "checksum": checksum})
