"""Abstract profile cache interface for multiple implementations."""

from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

from core.models import ProfileResult


class IProfileCache(ABC):
    """Cache of profiling results keyed by backend fingerprint."""

    @abstractmethod
    def get(self, key: str) -> Optional[ProfileResult]:
        """Get a cached profile, or None."""
        pass

    @abstractmethod
    def put(self, key: str, result: ProfileResult) -> None:
        """Store a profile."""
        pass

    @abstractmethod
    def clear(self) -> None:
        """Drop every entry."""
        pass

    @abstractmethod
    def stats(self) -> Dict[str, Any]:
        """Hit/miss counters and size."""
        pass
