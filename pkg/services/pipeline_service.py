"""Pipeline facade shared by the CLI and the HTTP routes.

Each command takes a validated ``ExperimentSpec`` and returns a
``PipelineReport``: profile, plan, simulate, compare and check.
"""

import asyncio
import dataclasses
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

from core.config import Settings
from core.exceptions import InfeasiblePlanError, ModelTooLargeError, ValidationError
from core.interfaces import IProfiler
from core.models import (
    AllocationPlan,
    ClusterGroundTruth,
    CommProfile,
    ExperimentSpec,
    PipelineReport,
    ProfileResult,
    SimReport,
)
from infrastructure.cache_factory import create_profile_cache
from infrastructure.hardware_sim import SimulatedCluster
from services.baselines import homogeneous_groups, rated_capacity_plan, subcluster, uniform_plan
from services.cached_profiler import CachedProfiler
from services.check_service import CheckSuite
from services.comm_model import build_comm_profile
from services.perf_model import PerfCurve
from services.planner import BatchPlanner, create_planner
from services.profiler import Profiler, create_profiler
from services.simulator import ClusterSimulator

logger = logging.getLogger(__name__)

COMMANDS = ("profile", "plan", "simulate", "compare", "check")


def _spec_summary(spec: ExperimentSpec) -> Dict[str, Any]:
    stage = spec.stage if isinstance(spec.stage, str) else int(spec.stage)
    return {
        "devices": spec.cluster.size,
        "gbs": spec.gbs,
        "stage": stage,
        "iterations": spec.iterations,
        "seed": spec.seed,
    }


def _sim_row(report: SimReport) -> Dict[str, Any]:
    return {
        "strategy": report.strategy,
        "T": report.mean.T,
        "throughput": report.mean.throughput,
        "throughput_std": report.throughput_std,
        "flops_proxy": report.mean.flops_proxy,
        "comm_total": report.mean.comm_total,
        "objective": report.mean.objective,
        "speedup_vs_baseline": report.speedup_vs_baseline,
    }


class PipelineService:
    """Runs pipeline commands against a simulated cluster.

    Profiles are cached per (cluster fingerprint, stage request) so the
    commands of one session share a single profiling pass.
    """

    def __init__(self, settings: Settings, profiler: IProfiler, planner: BatchPlanner):
        self.settings = settings
        self.profiler = profiler
        self.planner = planner

    async def _profile(self, spec: ExperimentSpec) -> Tuple[ProfileResult, CommProfile]:
        backend = SimulatedCluster(spec.cluster, spec.model)
        profile = await self.profiler.aprofile_cluster(backend, spec.stage)
        comm = build_comm_profile(spec.model, profile.effective_stage, spec.cluster)
        return profile, comm

    async def _plans(
        self, spec: ExperimentSpec
    ) -> Tuple[ProfileResult, CommProfile, Sequence[PerfCurve], AllocationPlan, AllocationPlan]:
        profile, comm = await self._profile(spec)
        curves = self.planner.curves(profile)
        plan = self.planner.plan(spec.gbs, profile, comm, curves)
        optimizer = [d.optimizer_seconds for d in profile.devices]
        baseline = uniform_plan(spec.gbs, curves, comm, optimizer)
        return profile, comm, curves, plan, baseline

    async def profile(self, spec: ExperimentSpec) -> PipelineReport:
        profile, comm = await self._profile(spec)
        rows = tuple(
            {
                "device_id": d.device_id,
                "name": d.name,
                "mbs": d.mbs,
                "mbs_estimate": d.mbs_estimate,
                "probes": d.probes,
                "optimizer_seconds": d.optimizer_seconds,
                "profiling_seconds": d.profiling_seconds,
            }
            for d in profile.devices
        )
        payload = {
            "command": "profile",
            "spec": _spec_summary(spec),
            "profile": profile.to_dict(),
            "comm": comm.to_dict(),
        }
        return PipelineReport(command="profile", payload=payload, rows=rows)

    async def plan(self, spec: ExperimentSpec) -> PipelineReport:
        profile, comm, curves, plan, _ = await self._plans(spec)
        rows = tuple(
            dict(a.to_dict(), mbs=curve.mbs, peak_speed=curve.peak_speed)
            for a, curve in zip(plan.assignments, curves)
        )
        curve_rows = tuple(row for curve in curves for row in curve.table_rows())
        payload = {
            "command": "plan",
            "spec": _spec_summary(spec),
            "profile": profile.to_dict(),
            "comm": comm.to_dict(),
            "curves": [curve.to_dict() for curve in curves],
            "plan": plan.to_dict(),
        }
        return PipelineReport(command="plan", payload=payload, rows=rows, tables={"curves": curve_rows})

    async def simulate(self, spec: ExperimentSpec, plan: Optional[AllocationPlan] = None) -> PipelineReport:
        """Simulate the planner's plan, or ``plan`` when given, next to the uniform baseline."""
        _, _, _, planned, baseline = await self._plans(spec)
        if plan is None:
            plan = planned
        elif plan.gbs != spec.gbs or len(plan.assignments) != spec.cluster.size:
            raise ValidationError(
                "Plan does not match the spec's cluster or gbs",
                field="plan",
                value={"gbs": plan.gbs, "devices": len(plan.assignments)},
            )
        runs = await asyncio.to_thread(self._simulate_pair, spec, plan, baseline)
        payload = {
            "command": "simulate",
            "spec": _spec_summary(spec),
            "plan": plan.to_dict(),
            "runs": [run.to_dict() for run in runs],
        }
        return PipelineReport(command="simulate", payload=payload, rows=tuple(_sim_row(r) for r in runs))

    def _simulate_pair(
        self, spec: ExperimentSpec, plan: AllocationPlan, baseline: AllocationPlan
    ) -> List[SimReport]:
        simulator = ClusterSimulator(spec.cluster, spec.model)
        baseline_run = simulator.simulate_run(baseline, spec.iterations)
        run = simulator.simulate_run(plan, spec.iterations)
        run = dataclasses.replace(
            run,
            speedup_vs_baseline=run.mean.throughput / baseline_run.mean.throughput,
            baseline=baseline_run.strategy,
        )
        return [run, baseline_run]

    async def compare(self, spec: ExperimentSpec) -> PipelineReport:
        """Planner against the uniform, rating-proportional and single-group baselines."""
        profile, comm, curves, plan, baseline = await self._plans(spec)
        optimizer = [d.optimizer_seconds for d in profile.devices]
        ratings = [d.rated_tflops for d in spec.cluster.devices]
        rated = rated_capacity_plan(spec.gbs, curves, comm, ratings, optimizer)
        entries: List[Tuple[Optional[str], ClusterGroundTruth, AllocationPlan]] = [
            (None, spec.cluster, p) for p in (plan, baseline, rated)
        ]

        groups: Dict[str, Any] = {}
        for label, indices in homogeneous_groups(spec.cluster, curves).items():
            group_spec = dataclasses.replace(spec, cluster=subcluster(spec.cluster, indices))
            entry: Dict[str, Any] = {"devices": list(indices)}
            try:
                _, _, _, group_plan, _ = await self._plans(group_spec)
            except (ModelTooLargeError, InfeasiblePlanError) as e:
                logger.warning("Skipping %s baseline: %s", label, e.message)
                entry["skipped"] = e.message
            else:
                entry["plan"] = group_plan.to_dict()
                entries.append((label, group_spec.cluster, group_plan))
            groups[label] = entry

        runs = await asyncio.to_thread(self._compare_runs, spec, entries)
        payload = {
            "command": "compare",
            "spec": _spec_summary(spec),
            "effective_stage": int(profile.effective_stage),
            "plans": [p.to_dict() for p in (plan, baseline, rated)],
            "groups": groups,
            "runs": [run.to_dict() for run in runs],
        }
        return PipelineReport(command="compare", payload=payload, rows=tuple(_sim_row(r) for r in runs))

    def _compare_runs(
        self,
        spec: ExperimentSpec,
        entries: Sequence[Tuple[Optional[str], ClusterGroundTruth, AllocationPlan]]
    ) -> List[SimReport]:
        """Simulate every entry; speedups are relative to the uniform run (second entry)."""
        runs = []
        for label, cluster, plan in entries:
            run = ClusterSimulator(cluster, spec.model).simulate_run(plan, spec.iterations)
            runs.append(dataclasses.replace(run, strategy=label) if label else run)
        reference = runs[1]
        compared = [
            dataclasses.replace(
                run,
                speedup_vs_baseline=run.mean.throughput / reference.mean.throughput,
                baseline=reference.strategy,
            )
            for run in runs
        ]
        logger.info(
            "Speedup of %s over %s: %.4f",
            compared[0].strategy, reference.strategy, compared[0].speedup_vs_baseline,
        )
        return compared

    async def check(self, spec: ExperimentSpec, instances: Optional[int] = None) -> PipelineReport:
        """Oracle and fidelity checks; ``payload["passed"]`` carries the verdict."""
        count = self.settings.check_instances if instances is None else instances
        suite = CheckSuite(self.settings)
        result = await asyncio.to_thread(suite.run, count, spec.seed, spec, self.planner)
        payload = dict(result, command="check", spec=_spec_summary(spec))
        return PipelineReport(command="check", payload=payload, rows=tuple(result["rows"]))

    async def run(self, command: str, spec: ExperimentSpec, **kwargs: Any) -> PipelineReport:
        if command not in COMMANDS:
            raise ValidationError(f"Unknown command '{command}'", field="command", value=command)
        logger.info("Running %s", command)
        return await getattr(self, command)(spec, **kwargs)

    def cache_stats(self) -> Dict[str, Any]:
        if not isinstance(self.profiler, CachedProfiler):
            return {"enabled": False}
        return dict(self.profiler.cache_stats(), enabled=self.settings.cache_enabled)

    def clear_cache(self) -> None:
        if isinstance(self.profiler, CachedProfiler):
            self.profiler.clear_cache()


def create_pipeline_service(settings: Settings, profiler: Optional[Profiler] = None) -> PipelineService:
    """Wire profiler, cache and planner from settings."""
    base = profiler or create_profiler(settings)
    cached = CachedProfiler(base, create_profile_cache(settings))
    return PipelineService(settings, cached, create_planner(settings))
