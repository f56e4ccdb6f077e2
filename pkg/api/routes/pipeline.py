"""Pipeline endpoints: the CLI commands over HTTP."""

from functools import wraps
from typing import Any, Dict, Optional

from fastapi import APIRouter, Body, Depends, HTTPException, Query

from core.dependencies import get_pipeline_service, get_spec_repository
from core.exceptions import PlannerError
from core.models import ExperimentSpec
from repositories.spec_repository import SpecRepository, with_overrides
from services.pipeline_service import PipelineService


def handle_exceptions(func):
    """Decorator to handle exceptions consistently across all endpoints."""

    @wraps(func)
    async def wrapper(*args, **kwargs):
        try:
            return await func(*args, **kwargs)
        except PlannerError as e:
            raise HTTPException(status_code=e.status_code, detail=e.to_dict())
        except Exception as e:
            raise HTTPException(status_code=500, detail={"error": "InternalError", "message": str(e)})

    return wrapper


router = APIRouter(
    prefix="/pipeline",
    tags=["pipeline"],
)


def _spec(
    repository: SpecRepository,
    document: Dict[str, Any],
    gbs: Optional[int],
    stage: Optional[str],
    iterations: Optional[int],
    seed: Optional[int]
) -> ExperimentSpec:
    spec = repository.from_dict(document)
    return with_overrides(spec, gbs=gbs, stage=stage, iterations=iterations, seed=seed)


@router.post("/profile")
@handle_exceptions
async def profile(
    document: Dict[str, Any] = Body(..., description="Spec document"),
    gbs: Optional[int] = Query(default=None, ge=1),
    stage: Optional[str] = Query(default=None, pattern="^(0|1|2|3|auto)$"),
    repository: SpecRepository = Depends(get_spec_repository),
    service: PipelineService = Depends(get_pipeline_service)
) -> Dict[str, Any]:
    """Maximum batch sizes and step-time samples per device."""
    spec = _spec(repository, document, gbs, stage, None, None)
    return (await service.profile(spec)).payload


@router.post("/plan")
@handle_exceptions
async def plan(
    document: Dict[str, Any] = Body(..., description="Spec document"),
    gbs: Optional[int] = Query(default=None, ge=1),
    stage: Optional[str] = Query(default=None, pattern="^(0|1|2|3|auto)$"),
    repository: SpecRepository = Depends(get_spec_repository),
    service: PipelineService = Depends(get_pipeline_service)
) -> Dict[str, Any]:
    """Allocation plan with the fitted curves."""
    spec = _spec(repository, document, gbs, stage, None, None)
    return (await service.plan(spec)).payload


@router.post("/simulate")
@handle_exceptions
async def simulate(
    document: Dict[str, Any] = Body(..., description="Spec document"),
    gbs: Optional[int] = Query(default=None, ge=1),
    stage: Optional[str] = Query(default=None, pattern="^(0|1|2|3|auto)$"),
    iterations: Optional[int] = Query(default=None, ge=1),
    seed: Optional[int] = Query(default=None, ge=0),
    repository: SpecRepository = Depends(get_spec_repository),
    service: PipelineService = Depends(get_pipeline_service)
) -> Dict[str, Any]:
    """Simulated runs of the plan and the uniform baseline."""
    spec = _spec(repository, document, gbs, stage, iterations, seed)
    return (await service.simulate(spec)).payload


@router.post("/compare")
@handle_exceptions
async def compare(
    document: Dict[str, Any] = Body(..., description="Spec document"),
    gbs: Optional[int] = Query(default=None, ge=1),
    stage: Optional[str] = Query(default=None, pattern="^(0|1|2|3|auto)$"),
    iterations: Optional[int] = Query(default=None, ge=1),
    seed: Optional[int] = Query(default=None, ge=0),
    repository: SpecRepository = Depends(get_spec_repository),
    service: PipelineService = Depends(get_pipeline_service)
) -> Dict[str, Any]:
    """Speedup of the planner over the baselines."""
    spec = _spec(repository, document, gbs, stage, iterations, seed)
    return (await service.compare(spec)).payload


@router.post("/check")
@handle_exceptions
async def check(
    document: Dict[str, Any] = Body(..., description="Spec document"),
    instances: Optional[int] = Query(default=None, ge=1, le=1000),
    seed: Optional[int] = Query(default=None, ge=0),
    repository: SpecRepository = Depends(get_spec_repository),
    service: PipelineService = Depends(get_pipeline_service)
) -> Dict[str, Any]:
    """Oracle and fidelity checks; ``passed`` carries the verdict."""
    spec = _spec(repository, document, None, None, None, seed)
    return (await service.check(spec, instances=instances)).payload


@router.get("/cache/stats")
async def cache_stats(
    service: PipelineService = Depends(get_pipeline_service)
) -> Dict[str, Any]:
    """Profile cache statistics."""
    return service.cache_stats()
