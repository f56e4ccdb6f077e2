"""Centralized application configuration."""

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings from environment variables (prefix ``PLANNER_``)."""

    app_name: str = "ZeRO Batch Planner"
    app_version: str = "1.0.0"
    debug: bool = False
    log_level: str = "INFO"

    default_iterations: int = Field(default=50, ge=1)
    default_seed: int = Field(default=0, ge=0)

    # Performance model
    peak_tolerance: float = 0.05
    speed_floor: float = 1e-9

    # Planner
    sweep_grid_points: int = 512

    # Check suite
    oracle_tolerance: float = 1.05
    fidelity_tolerance: float = 0.02
    check_instances: int = 200

    profile_in_parallel: bool = True

    cache_enabled: bool = True
    cache_type: str = "memory"
    cache_ttl: int = 3600
    cache_max_entries: int = 128

    class Config:
        env_file = ".env"
        env_prefix = "PLANNER_"
        case_sensitive = False


@lru_cache()
def get_settings() -> Settings:
    """Return singleton settings instance."""
    return Settings()
