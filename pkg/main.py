"""HTTP entry point: ``uvicorn main:app``."""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI

from api.routes import pipeline
from core.config import get_settings
from core.dependencies import get_container
from core.logging_config import configure_logging
from services.pipeline_service import COMMANDS

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    settings = get_settings()
    configure_logging(settings)
    logger.info("Starting %s v%s (cache %s)", settings.app_name, settings.app_version,
                settings.cache_type if settings.cache_enabled else "off")
    container = get_container()
    yield
    logger.info("Shutting down, dropping cached profiles")
    container.cleanup()


settings = get_settings()
app = FastAPI(
    title=settings.app_name,
    version=settings.app_version,
    description="Batch allocation for heterogeneous ZeRO data-parallel clusters",
    debug=settings.debug,
    lifespan=lifespan,
)
app.include_router(pipeline.router)


@app.get("/")
async def read_root():
    """Service info and the available pipeline commands."""
    return {
        "app": settings.app_name,
        "version": settings.app_version,
        "status": "running",
        "commands": [f"/pipeline/{command}" for command in COMMANDS],
    }


@app.get("/health")
async def health_check():
    return {"status": "healthy"}
