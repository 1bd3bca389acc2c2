"""Benchmark and verification command line tool.

Subcommands: ingest, analyze, mixed, verify, stats.  Every report is
line-oriented ``key=value`` with stable key names; content fields are
deterministic for a fixed seed (timing fields are not).
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import random
import sys
import threading
import time
from typing import Optional

import numpy as np

from . import analytics
from .engine import Engine, EngineConfig, MIB
from .hashing import edge_keys_np
from .oracle import GraphOracle

logger = logging.getLogger(__name__)

WEIGHTED_DTYPE = np.dtype([("src", "<u8"), ("dst", "<u8"), ("w", "<f8")])


def _report(pairs) -> None:
    for key, value in pairs:
        if isinstance(value, float):
            value = f"{value:.6f}"
        print(f"{key}={value}")


def _values_checksum(values: np.ndarray) -> str:
    return hashlib.blake2b(np.ascontiguousarray(values).tobytes(),
                           digest_size=8).hexdigest()


def _peak_rss_kb() -> Optional[int]:
    try:
        import resource
        return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    except Exception:
        return None


# -- datasets ----------------------------------------------------------------

def load_dataset(path: str, fmt: str):
    """Returns (edges: ndarray[n,2] of u64, weights: ndarray[n] of f64 | None)."""
    if fmt == "bin":
        raw = np.fromfile(path, dtype="<u8")
        if raw.size % 2:
            raise ValueError(f"{path}: not a whole number of u64 pairs")
        return raw.reshape(-1, 2), None
    if fmt == "bin-weighted":
        rows = np.fromfile(path, dtype=WEIGHTED_DTYPE)
        edges = np.column_stack([rows["src"], rows["dst"]]).astype(np.uint64)
        return edges, rows["w"].astype(np.float64)
    if fmt == "text":
        srcs, dsts, weights = [], [], []
        any_weight = False
        with open(path) as fh:
            for line in fh:
                parts = line.split()
                if not parts or parts[0].startswith("#"):
                    continue
                srcs.append(int(parts[0]))
                dsts.append(int(parts[1]))
                if len(parts) > 2:
                    weights.append(float(parts[2]))
                    any_weight = True
                else:
                    weights.append(1.0)
        edges = np.array(list(zip(srcs, dsts)), dtype=np.uint64).reshape(-1, 2)
        return edges, (np.array(weights) if any_weight else None)
    raise ValueError(f"unknown dataset format: {fmt}")


def detect_format(path: str, flag: Optional[str]) -> str:
    if flag:
        return flag
    if path.endswith(".txt") or path.endswith(".el"):
        return "text"
    if path.endswith(".wbin"):
        return "bin-weighted"
    return "bin"


# -- engine construction -----------------------------------------------------

def engine_from_args(args, background: bool = True) -> Engine:
    cfg = EngineConfig(
        data_dir=args.data_dir,
        memgraph_bytes=args.memgraph_mb * MIB,
        level_factor=args.level_factor,
        max_levels=args.max_levels,
        l0_limit=args.l0_limit,
        segment_target_bytes=args.segment_target_mb * MIB,
        bloom_bits_per_key=args.bloom_bits_per_key,
        use_mlindex=not args.no_mlindex,
        background=background,
    )
    return Engine(cfg)


def _insert_indices(engine: Engine, edges, weights, indices,
                    delete_every: int, seed: int) -> None:
    rng = random.Random(seed)
    recent: list[tuple[int, int]] = []
    for i in indices:
        src, dst = int(edges[i, 0]), int(edges[i, 1])
        prop = None
        if weights is not None:
            prop = np.float64(weights[i]).tobytes()
        engine.insert_edge(src, dst, prop)
        recent.append((src, dst))
        if delete_every and len(recent) >= delete_every:
            dsrc, ddst = recent[rng.randrange(len(recent))]
            engine.delete_edge(dsrc, ddst)
            recent.clear()


def _run_writers(engine: Engine, edges, weights, lo: int, hi: int,
                 threads: int, delete_every: int, seed: int) -> None:
    """Edges are partitioned across threads by (src, dst) key hash, so
    every occurrence of a key is handled by the same thread in dataset
    order — the final visible graph is interleaving-independent."""
    if threads <= 1 or hi - lo < threads:
        _insert_indices(engine, edges, weights, range(lo, hi),
                        delete_every, seed)
        return
    keys = edge_keys_np(edges[lo:hi, 0], edges[lo:hi, 1]) % np.uint64(threads)
    workers = []
    errors = []

    def work(indices, s):
        try:
            _insert_indices(engine, edges, weights, indices, delete_every, s)
        except Exception as exc:  # pragma: no cover - surfaced below
            errors.append(exc)

    for t in range(threads):
        indices = (np.nonzero(keys == t)[0] + lo).tolist()
        th = threading.Thread(target=work, args=(indices, seed + t))
        th.start()
        workers.append(th)
    for th in workers:
        th.join()
    if errors:
        raise errors[0]


# -- subcommands ---------------------------------------------------------------

def cmd_ingest(args) -> int:
    edges, weights = load_dataset(args.dataset, detect_format(args.dataset, args.format))
    n = len(edges)
    warm = int(n * args.warmup_fraction)
    engine = engine_from_args(args)
    try:
        _run_writers(engine, edges, weights, 0, warm, args.threads,
                     args.delete_every, args.seed)
        before = engine.counters.snapshot()
        t0 = time.perf_counter()
        _run_writers(engine, edges, weights, warm, n, args.threads,
                     args.delete_every, args.seed + 1000)
        elapsed = time.perf_counter() - t0
        after = engine.counters.snapshot()
        with engine.snapshot() as h:
            scan = analytics.scan_all(engine, h)
        p50, p99 = engine.counters.write_latency_percentiles()
        pairs = [
            ("edges_total", n),
            ("edges_timed", n - warm),
            ("elapsed_s", elapsed),
            ("edges_per_s", (n - warm) / elapsed if elapsed > 0 else 0.0),
            ("write_p50_us", p50 * 1e6),
            ("write_p99_us", p99 * 1e6),
            ("bytes_written", after["bytes_written"]),
            ("bytes_written_timed", after["bytes_written"] - before["bytes_written"]),
            ("visible_edges", scan.extra["edge_count"]),
            ("checksum", f"{scan.extra['checksum']:016x}"),
        ]
        rss = _peak_rss_kb()
        if rss is not None:
            pairs.append(("peak_rss_kb", rss))
        _report(pairs)
    finally:
        engine.close()
    return 0


def cmd_analyze(args) -> int:
    engine = engine_from_args(args)
    try:
        before = engine.counters.snapshot()
        with engine.snapshot() as h:
            if args.algo == "bfs":
                res = analytics.bfs(engine, h, args.src)
            elif args.algo == "sssp":
                res = analytics.sssp(engine, h, args.src)
            elif args.algo == "cc":
                res = analytics.cc(engine, h)
            elif args.algo == "scan":
                res = analytics.scan_all(engine, h)
            else:
                raise SystemExit(f"unknown algo: {args.algo}")
        after = engine.counters.snapshot()
        if args.algo == "scan":
            checksum = f"{res.extra['checksum']:016x}"
        else:
            checksum = _values_checksum(res.values)
        pairs = [
            ("algo", args.algo),
            ("tau", res.tau),
            ("runtime_s", res.elapsed_s),
            ("visited", res.visited),
            ("edges_scanned", res.edges_scanned),
            ("bytes_read", after["bytes_read"] - before["bytes_read"]),
            ("blocks_read", after["blocks_read"] - before["blocks_read"]),
            ("checksum", checksum),
        ]
        for key, value in sorted(res.extra.items()):
            if key != "checksum":
                pairs.append((key, value))
        _report(pairs)
    finally:
        engine.close()
    return 0


def cmd_mixed(args) -> int:
    edges, weights = load_dataset(args.dataset, detect_format(args.dataset, args.format))
    n = len(edges)
    warm = int(n * args.warmup_fraction)
    engine = engine_from_args(args)
    try:
        _run_writers(engine, edges, weights, 0, warm, args.threads,
                     args.delete_every, args.seed)
        src = args.src if args.src is not None else int(edges[0, 0])
        stop = threading.Event()
        sssp_runs: list[float] = []
        unstable = []

        def reader_loop():
            while not stop.is_set():
                with engine.snapshot() as h:
                    r1 = analytics.sssp(engine, h, src)
                    r2 = analytics.sssp(engine, h, src)
                    if _values_checksum(r1.values) != _values_checksum(r2.values):
                        unstable.append(h.tau)
                        return
                    sssp_runs.append(r1.elapsed_s)

        readers = [threading.Thread(target=reader_loop)
                   for _ in range(args.reader_threads)]
        for t in readers:
            t.start()
        t0 = time.perf_counter()
        _run_writers(engine, edges, weights, warm, n, args.threads,
                     args.delete_every, args.seed + 1000)
        elapsed = time.perf_counter() - t0
        stop.set()
        for t in readers:
            t.join()
        pairs = [
            ("edges_timed", n - warm),
            ("write_elapsed_s", elapsed),
            ("edges_per_s", (n - warm) / elapsed if elapsed > 0 else 0.0),
            ("sssp_runs", len(sssp_runs)),
            ("sssp_mean_s", float(np.mean(sssp_runs)) if sssp_runs else 0.0),
            ("snapshot_stable", 0 if unstable else 1),
        ]
        _report(pairs)
        return 1 if unstable else 0
    finally:
        engine.close()


def generate_workload(seed: int, ops: int, vertices: int,
                      delete_every: int = 20):
    """Deterministic op stream: ('i', src, dst, prop) / ('d', src, dst)."""
    rng = random.Random(seed)
    out = []
    live: list[tuple[int, int]] = []
    for i in range(ops):
        if delete_every and live and i % delete_every == delete_every - 1:
            src, dst = live[rng.randrange(len(live))]
            out.append(("d", src, dst))
        else:
            src = rng.randrange(vertices)
            dst = rng.randrange(vertices)
            prop = rng.randbytes(rng.randrange(9)) if rng.random() < 0.3 else None
            out.append(("i", src, dst, prop))
            live.append((src, dst))
            if len(live) > 4096:
                del live[: 2048]
    return out


def _compare_state(engine: Engine, oracle: GraphOracle, op_index: int,
                   seed: int) -> Optional[str]:
    with engine.snapshot() as h:
        for src in oracle.sources():
            got = engine.scan_neighbors(src, h, with_props=True)
            want = [(d, p if p is not None else b"")  # engine uses b'' for no-prop
                    for d, p in oracle.neighbors(src, h.tau)]
            got = [(d, p if p else b"") for d, p in got]
            want = [(d, p if p else b"") for d, p in want]
            if got != want:
                return (f"divergence seed={seed} op_index={op_index} src={src} "
                        f"engine={got[:8]} oracle={want[:8]}")
    return None


def cmd_verify(args) -> int:
    workload = generate_workload(args.seed, args.ops, args.vertices)
    rng = random.Random(args.seed + 1)
    checkpoints = sorted(rng.sample(range(1, max(len(workload), 2)),
                                    min(args.checkpoints, max(len(workload) - 1, 1)))
                         ) if workload else []
    engine = engine_from_args(args, background=False)
    oracle = GraphOracle()
    try:
        next_cp = 0
        for i, op in enumerate(workload):
            if op[0] == "i":
                ts = engine.insert_edge(op[1], op[2], op[3])
                oracle.insert(op[1], op[2], ts, op[3])
            else:
                ts = engine.delete_edge(op[1], op[2])
                if ts is not None:
                    oracle.delete(op[1], op[2], ts)
            if next_cp < len(checkpoints) and i + 1 == checkpoints[next_cp]:
                next_cp += 1
                msg = _compare_state(engine, oracle, i, args.seed)
                if msg:
                    print(msg)
                    _report([("verify", "fail")])
                    return 1
        msg = _compare_state(engine, oracle, len(workload), args.seed)
        if msg:
            print(msg)
            _report([("verify", "fail")])
            return 1
        _report([("verify", "pass"), ("ops", len(workload)),
                 ("checkpoints", len(checkpoints) + 1)])
        return 0
    finally:
        engine.close()


def cmd_stats(args) -> int:
    engine = engine_from_args(args, background=False)
    try:
        stats = engine.stats()
        pairs = []
        for key, value in sorted(stats.items()):
            if key == "levels":
                for lvl, (count, nbytes) in value.items():
                    pairs.append((f"level{lvl}_segments", count))
                    pairs.append((f"level{lvl}_bytes", nbytes))
            else:
                pairs.append((key, value))
        pairs.append(("max_vertex_id", engine.max_vertex_id()))
        _report(pairs)
    finally:
        engine.close()
    return 0


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsmgraph",
                                     description="LSM/CSR graph store benchmark tool")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--data-dir", required=True)
        p.add_argument("--memgraph-mb", type=int, default=64)
        p.add_argument("--level-factor", type=int, default=10)
        p.add_argument("--max-levels", type=int, default=5)
        p.add_argument("--l0-limit", type=int, default=4)
        p.add_argument("--segment-target-mb", type=int, default=8)
        p.add_argument("--bloom-bits-per-key", type=int, default=10)
        p.add_argument("--threads", type=int, default=8)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--no-mlindex", action="store_true",
                       help="read via manifest ranges + bloom instead of the index")

    def dataset(p):
        p.add_argument("--dataset", required=True)
        p.add_argument("--format", choices=["bin", "bin-weighted", "text"])
        p.add_argument("--warmup-fraction", type=float, default=0.8)
        p.add_argument("--delete-every", type=int, default=0,
                       help="issue one delete per N inserts (20 = the 20:1 mix)")

    p = sub.add_parser("ingest", help="timed edge ingestion")
    common(p)
    dataset(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="run one algorithm on a snapshot")
    common(p)
    p.add_argument("--algo", choices=["bfs", "sssp", "cc", "scan"], required=True)
    p.add_argument("--src", type=int, default=0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("mixed", help="concurrent ingest + repeated SSSP")
    common(p)
    dataset(p)
    p.add_argument("--src", type=int, default=None)
    p.add_argument("--reader-threads", type=int, default=8)
    p.set_defaults(func=cmd_mixed)

    p = sub.add_parser("verify", help="differential test against an in-memory oracle")
    common(p)
    p.add_argument("--ops", type=int, default=100_000)
    p.add_argument("--vertices", type=int, default=1024)
    p.add_argument("--checkpoints", type=int, default=5)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stats", help="print store statistics")
    common(p)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
