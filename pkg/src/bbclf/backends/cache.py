"""Content-addressed on-disk cache for pooled feature vectors.

Records are appended to a JSONL file: ``{"key": hex, "d": int,
"values": [float, ...]}``. Floats round-trip bit-exactly through JSON's
repr-based serialization. Corrupt lines are skipped with a warning and
the affected key is simply recomputed by the caller.
"""

from __future__ import annotations

import json
import logging
import threading
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class FeatureCache:
    """Single-writer, many-reader JSONL feature store keyed by content hash."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, np.ndarray] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    key = record["key"]
                    values = np.asarray(record["values"], dtype=np.float64)
                    if values.shape != (int(record["d"]),):
                        raise ValueError("dimension mismatch")
                except (ValueError, KeyError, TypeError) as exc:
                    logger.warning(
                        "skipping corrupt cache record at %s:%d (%s)",
                        self.path,
                        lineno,
                        exc,
                    )
                    continue
                self._entries[key] = values

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get(self, key: str) -> np.ndarray | None:
        values = self._entries.get(key)
        return None if values is None else values.copy()

    def put(self, key: str, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        with self._lock:
            if key in self._entries:
                return
            record = {"key": key, "d": int(values.shape[0]), "values": values.tolist()}
            line = json.dumps(record, sort_keys=True) + "\n"
            # One record per write keeps lines atomic for concurrent readers.
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
            self._entries[key] = values
