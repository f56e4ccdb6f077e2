"""In-memory profile cache with TTL and LRU eviction."""

import threading
import time
from collections import OrderedDict
from typing import Any, Dict, Optional, Tuple

from core.cache_interface import IProfileCache
from core.models import ProfileResult


class InMemoryProfileCache(IProfileCache):
    """Process-local profile cache.

    Thread-safe because profiling runs per-device work in worker threads.
    Not shared between processes or persistent across restarts.
    """

    def __init__(self, ttl: Optional[int] = 3600, max_entries: int = 128):
        self._entries: "OrderedDict[str, Tuple[ProfileResult, Optional[float]]]" = OrderedDict()
        self._lock = threading.Lock()
        self._ttl = ttl
        self._max_entries = max(1, max_entries)
        self._hits = 0
        self._misses = 0

    def _is_expired(self, expiry: Optional[float]) -> bool:
        return expiry is not None and expiry < time.monotonic()

    def get(self, key: str) -> Optional[ProfileResult]:
        with self._lock:
            entry = self._entries.get(key)
            if entry is None or self._is_expired(entry[1]):
                self._entries.pop(key, None)
                self._misses += 1
                return None
            self._entries.move_to_end(key)
            self._hits += 1
            return entry[0]

    def put(self, key: str, result: ProfileResult) -> None:
        with self._lock:
            expiry = time.monotonic() + self._ttl if self._ttl else None
            self._entries[key] = (result, expiry)
            self._entries.move_to_end(key)
            while len(self._entries) > self._max_entries:
                self._entries.popitem(last=False)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def size(self) -> int:
        """Return number of cached entries."""
        with self._lock:
            return len(self._entries)

    def stats(self) -> Dict[str, Any]:
        with self._lock:
            size, hits, misses = len(self._entries), self._hits, self._misses
        total_requests = hits + misses
        hit_rate = (hits / total_requests) if total_requests else 0.0
        return {
            "size": size,
            "hits": hits,
            "misses": misses,
            "hit_rate": round(hit_rate, 4),
        }
