"""VEIL: a volume-hiding encrypted key-value store with randomized bucketization and overlapping padding."""

from .core import Dataset, Metrics, Params, Record, RecordKind, VeilError
from .engine import delete, insert, query, setup

__all__ = ["Dataset", "Metrics", "Params", "Record", "RecordKind", "VeilError",
           "delete", "insert", "query", "setup"]
__version__ = "0.1.0"
