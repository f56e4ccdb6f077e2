"""Factory to create profile cache instances based on configuration."""

from typing import Any, Dict, Optional

from core.cache_interface import IProfileCache
from core.config import Settings
from core.exceptions import ConfigurationError
from core.models import ProfileResult
from infrastructure.memory_cache import InMemoryProfileCache


def create_profile_cache(settings: Settings) -> IProfileCache:
    """Create cache implementation based on settings.

    Args:
        settings: Application configuration

    Returns:
        IProfileCache implementation

    Raises:
        ConfigurationError: If cache_type is not supported
    """
    if not settings.cache_enabled:
        return NullProfileCache()

    cache_type = settings.cache_type.lower()
    if cache_type == "memory":
        return InMemoryProfileCache(ttl=settings.cache_ttl, max_entries=settings.cache_max_entries)

    raise ConfigurationError(
        f"Unsupported cache type: {cache_type}. Use 'memory'",
        config_key="cache_type",
    )


class NullProfileCache(IProfileCache):
    """No-op cache used when caching is disabled."""

    def get(self, key: str) -> Optional[ProfileResult]:
        return None

    def put(self, key: str, result: ProfileResult) -> None:
        pass

    def clear(self) -> None:
        pass

    def stats(self) -> Dict[str, Any]:
        return {"size": 0, "hits": 0, "misses": 0, "hit_rate": 0.0}
