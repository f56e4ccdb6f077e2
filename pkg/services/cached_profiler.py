"""Cached profiler using Decorator Pattern."""

import logging
from typing import Any, Dict

from core.cache_interface import IProfileCache
from core.interfaces import IDeviceBackend, IProfiler
from core.models import ProfileResult, StageRequest

logger = logging.getLogger(__name__)


class CachedProfiler(IProfiler):
    """Decorator adding a profile cache to any profiler implementation."""

    def __init__(self, base_profiler: IProfiler, cache: IProfileCache):
        self._base = base_profiler
        self._cache = cache

    def _make_cache_key(self, backend: IDeviceBackend, stage_request: StageRequest) -> str:
        """Generate consistent cache key."""
        stage = stage_request if isinstance(stage_request, str) else int(stage_request)
        return f"profile:{backend.fingerprint()}:{stage}"

    def profile_cluster(self, backend: IDeviceBackend, stage_request: StageRequest) -> ProfileResult:
        key = self._make_cache_key(backend, stage_request)
        cached = self._cache.get(key)
        if cached is not None:
            logger.debug("Profile cache hit %s", key)
            return cached
        result = self._base.profile_cluster(backend, stage_request)
        self._cache.put(key, result)
        return result

    async def aprofile_cluster(
        self, backend: IDeviceBackend, stage_request: StageRequest
    ) -> ProfileResult:
        key = self._make_cache_key(backend, stage_request)
        cached = self._cache.get(key)
        if cached is not None:
            logger.debug("Profile cache hit %s", key)
            return cached
        result = await self._base.aprofile_cluster(backend, stage_request)
        self._cache.put(key, result)
        return result

    def cache_stats(self) -> Dict[str, Any]:
        return self._cache.stats()

    def clear_cache(self) -> None:
        self._cache.clear()
