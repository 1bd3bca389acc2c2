"""Embedded dynamic graph store: an LSM-style multi-level on-disk layout
over CSR segment files, with snapshot-isolated reads and analytics."""

from .engine import ConfigError, Engine, EngineConfig, EngineError, open_engine
from .mlindex import Position
from .segment import CorruptSegment
from .versioning import SnapshotHandle
from .vertices import VertexNotFound

__all__ = [
    "ConfigError",
    "CorruptSegment",
    "Engine",
    "EngineConfig",
    "EngineError",
    "Position",
    "SnapshotHandle",
    "VertexNotFound",
    "open_engine",
]

__version__ = "0.1.0"
