"""Dependency injection container for FastAPI."""

from fastapi import Depends

from core.config import Settings, get_settings
from repositories.spec_repository import SpecRepository
from services.pipeline_service import PipelineService, create_pipeline_service


class DependencyContainer:
    """Application-scoped singletons; the profile cache lives as long as the app."""

    def __init__(self):
        self._pipeline: PipelineService | None = None

    def pipeline(self, settings: Settings) -> PipelineService:
        """Return the singleton pipeline service."""
        if self._pipeline is None:
            self._pipeline = create_pipeline_service(settings)
        return self._pipeline

    def cleanup(self) -> None:
        """Drop cached profiles on shutdown."""
        if self._pipeline is not None:
            self._pipeline.clear_cache()
        self._pipeline = None


_container: DependencyContainer | None = None


def get_container() -> DependencyContainer:
    """Return singleton dependency container."""
    global _container
    if _container is None:
        _container = DependencyContainer()
    return _container


def get_spec_repository(settings: Settings = Depends(get_settings)) -> SpecRepository:
    """Provide spec repository instance."""
    return SpecRepository(settings)


def get_pipeline_service(
    settings: Settings = Depends(get_settings)
) -> PipelineService:
    """Provide pipeline service instance."""
    return get_container().pipeline(settings)
