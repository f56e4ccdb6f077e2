"""Pipeline service tests over a small heterogeneous spec."""

import pytest

from core.config import Settings
from core.exceptions import ModelTooLargeError, ValidationError
from core.models import AllocationPlan
from repositories.spec_repository import SpecRepository, with_overrides
from services.pipeline_service import create_pipeline_service


@pytest.fixture
def service():
    return create_pipeline_service(Settings(check_instances=10))


@pytest.fixture
def spec(spec_document):
    return SpecRepository().from_dict(spec_document)


async def test_profile_reports_every_device(service, spec):
    """Test: one row per device with its maximum batch size."""
    report = await service.profile(spec)

    assert report.command == "profile"
    assert [row["mbs"] for row in report.rows] == [58, 58, 58, 58]
    assert report.payload["profile"]["effective_stage"] == 0


async def test_plan_includes_curves(service, spec):
    """Test: plan rows cover every device and the curve table every batch size."""
    report = await service.plan(spec)

    assert len(report.rows) == 4
    assert sum(row["total_batch"] for row in report.rows) == 256
    assert len(report.tables["curves"]) == 4 * 58
    assert report.payload["plan"]["gbs"] == 256


async def test_simulate_reports_speedup(service, spec):
    """Test: the planner beats the uniform baseline on a 2:1 cluster."""
    report = await service.simulate(spec)

    runs = report.payload["runs"]
    assert [run["strategy"] for run in runs] == ["zero01", "uniform"]
    assert runs[0]["baseline"] == "uniform"
    assert runs[0]["speedup_vs_baseline"] >= 1.3


async def test_simulate_given_plan_matches_default(service, spec):
    """Test: simulating a round-tripped plan reproduces the default run."""
    planned = await service.plan(spec)
    plan = AllocationPlan.from_dict(planned.payload["plan"])

    default = await service.simulate(spec)
    given = await service.simulate(spec, plan=plan)

    assert given.payload == default.payload


async def test_simulate_rejects_foreign_plan(service, spec):
    """Test: a plan for another gbs is refused."""
    planned = await service.plan(with_overrides(spec, gbs=128))
    plan = AllocationPlan.from_dict(planned.payload["plan"])

    with pytest.raises(ValidationError) as exc_info:
        await service.simulate(spec, plan=plan)
    assert exc_info.value.field == "plan"


async def test_compare_uses_uniform_reference(service, spec):
    """Test: every strategy, speedups relative to the uniform run."""
    report = await service.compare(spec)

    runs = report.payload["runs"]
    assert [run["strategy"] for run in runs] == ["zero01", "uniform", "rated_capacity", "slowest_group", "fastest_group"]
    assert runs[1]["speedup_vs_baseline"] == 1.0
    assert runs[0]["speedup_vs_baseline"] > 1.0
    assert report.payload["effective_stage"] == 0


async def test_check_passes(service, spec):
    """Test: random instances and the spec cluster pass the checks."""
    report = await service.check(spec)

    assert report.payload["command"] == "check"
    assert report.payload["instances"] == 10
    assert report.payload["passed"] is True
    assert report.payload["spec_cluster"]["passed"] is True


async def test_model_too_large(service, spec_document):
    """Test: a model that fits nowhere is reported, not planned."""
    for device in spec_document["cluster"]["devices"]:
        device["total_mem"] = 1024
        device["act_mem_per_batch"] = 1
    spec = SpecRepository().from_dict(spec_document)

    with pytest.raises(ModelTooLargeError):
        await service.plan(spec)


async def test_unknown_command(service, spec):
    """Test: run only dispatches known commands."""
    with pytest.raises(ValidationError):
        await service.run("train", spec)


async def test_profiles_are_cached(service, spec):
    """Test: commands in one session share a profiling pass."""
    await service.plan(spec)
    await service.compare(spec)

    stats = service.cache_stats()
    assert stats["enabled"] is True
    assert stats["hits"] >= 1

    service.clear_cache()
    assert service.cache_stats()["size"] == 0


async def test_compare_matches_simulate(service, spec):
    """Test: the planner run inside compare equals the standalone simulation."""
    simulated = await service.simulate(spec)
    compared = await service.compare(spec)

    assert compared.payload["runs"][0]["mean"] == simulated.payload["runs"][0]["mean"]


async def test_homogeneous_plan_is_balanced(service, spec_document):
    """Test: identical devices get identical batches and zero objective."""
    spec_document["cluster"]["devices"][1]["compute_per_batch"] = 0.01
    spec = SpecRepository().from_dict(spec_document)

    plan = (await service.plan(spec)).payload["plan"]

    assert len({a["micro_batch"] for a in plan["assignments"]}) == 1
    assert plan["metrics"]["objective"] == 0.0


async def test_compare_device_groups(service, spec):
    """Test: the mixed cluster outruns either hardware group on its own."""
    report = await service.compare(spec)

    groups = report.payload["groups"]
    assert groups["slowest_group"]["devices"] == [2, 3]
    assert groups["fastest_group"]["devices"] == [0, 1]
    runs = {run["strategy"]: run for run in report.payload["runs"]}
    planner = runs["zero01"]["mean"]["throughput"]
    fastest = runs["fastest_group"]["mean"]["throughput"]
    slowest = runs["slowest_group"]["mean"]["throughput"]
    assert planner > fastest > slowest
    assert runs["fastest_group"]["baseline"] == "uniform"
    assert sum(a["total_batch"] for a in groups["fastest_group"]["plan"]["assignments"]) == 256


async def test_compare_homogeneous_has_no_groups(service, spec_document):
    """Test: a single hardware type yields no group baselines."""
    spec_document["cluster"]["devices"][1]["compute_per_batch"] = 0.01
    spec = SpecRepository().from_dict(spec_document)

    report = await service.compare(spec)

    assert report.payload["groups"] == {}
    assert len(report.payload["runs"]) == 3


async def test_compare_skips_group_that_does_not_fit(service, spec_document):
    """Test: a group too small to shard the model is reported as skipped."""
    for device in spec_document["cluster"]["devices"]:
        device["total_mem"] = 755_000_000
        device["act_mem_per_batch"] = 10_000_000
    spec = SpecRepository().from_dict(spec_document)

    report = await service.compare(spec)

    assert report.payload["effective_stage"] == 1
    assert set(report.payload["groups"]) == {"slowest_group", "fastest_group"}
    assert all("skipped" in group for group in report.payload["groups"].values())
    assert len(report.payload["runs"]) == 3
