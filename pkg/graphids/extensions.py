# graphids/extensions.py - Shared logger, logging setup and in-memory caches
import logging
import os
from collections import OrderedDict
from typing import Callable, Hashable, Optional

import numpy as np
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

logger = logging.getLogger("graph-ids")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


class RowCache:
    """LRU cache of numpy rows bounded by a byte budget.

    Used for kernel rows during SVM training; a row that alone exceeds the
    budget is computed and returned without being stored.
    """

    def __init__(self, max_bytes: int):
        self.max_bytes = max(int(max_bytes), 0)
        self.cache: "OrderedDict[Hashable, np.ndarray]" = OrderedDict()
        self.bytes_used = 0
        self.hits = 0
        self.misses = 0

    def get(self, key: Hashable) -> Optional[np.ndarray]:
        row = self.cache.get(key)
        if row is None:
            return None
        self.cache.move_to_end(key)
        return row

    def set(self, key: Hashable, row: np.ndarray):
        if row.nbytes > self.max_bytes:
            return
        if key in self.cache:
            self.bytes_used -= self.cache.pop(key).nbytes

        # Evict least recently used rows until the new one fits
        while self.cache and self.bytes_used + row.nbytes > self.max_bytes:
            _, evicted = self.cache.popitem(last=False)
            self.bytes_used -= evicted.nbytes

        self.cache[key] = row
        self.bytes_used += row.nbytes

    def get_or_compute(self, key: Hashable, compute: Callable[[], np.ndarray]) -> np.ndarray:
        row = self.get(key)
        if row is not None:
            self.hits += 1
            return row
        self.misses += 1
        row = compute()
        self.set(key, row)
        return row

    def clear(self):
        self.cache.clear()
        self.bytes_used = 0

    def size(self) -> int:
        return len(self.cache)


def resolve_workers(value: Optional[int] = None) -> int:
    """Worker count from an explicit value or GIDS_WORKERS, at least 1"""
    if value is None:
        raw = os.environ.get("GIDS_WORKERS", "1")
        try:
            value = int(raw)
        except ValueError:
            logger.warning(f"Ignoring non-integer GIDS_WORKERS={raw!r}")
            value = 1
    return max(int(value), 1)


def init_extensions(app):
    """Configure logging for the application"""
    level = getattr(logging, str(app.config.get("LOG_LEVEL", "INFO")).upper(), logging.INFO)

    if not logging.getLogger().handlers:
        logging.basicConfig(level=level, format=LOG_FORMAT)

    logger.setLevel(level)
    logger.debug(f"Worker pool size: {app.config.get('WORKERS')}")
    logger.debug(f"Kernel cache budget: {app.config.get('KERNEL_CACHE_BYTES')} bytes")
