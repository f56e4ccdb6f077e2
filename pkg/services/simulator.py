"""Execute allocation plans against the latent cluster.

An iteration is a sequence of synchronized segments; within each segment
every device is busy for its own compute plus the collectives it joins,
and the segment ends when the slowest device does. Communication and
compute are additive, matching the planner's cost model.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import InternalInconsistencyError, ValidationError
from core.models import (
    AllocationPlan,
    ClusterGroundTruth,
    IterationReport,
    ModelSpec,
    SegmentReport,
    SimReport,
    ZeroStage,
)
from infrastructure.hardware_sim import run_step
from services.comm_model import build_comm_profile

logger = logging.getLogger(__name__)


def _stable_mean(values: Sequence[float]) -> float:
    """Mean that returns the common value exactly when all values agree."""
    base = values[0]
    return base + math.fsum(v - base for v in values) / len(values)


def realized_under_utilization(plan: AllocationPlan, idle: Sequence[float]) -> Tuple[float, ...]:
    """Per-device idle time weighted by the plan's peak speeds (unit weights without them)."""
    weights = plan.peak_speeds or (1.0,) * len(idle)
    return tuple(d * p for d, p in zip(idle, weights))


class ClusterSimulator:
    """Deterministic simulation of plans on one latent cluster and model."""

    def __init__(self, cluster: ClusterGroundTruth, model: ModelSpec):
        self.cluster = cluster
        self.model = model

    def _compute(self, device_id: int, batch_size: int, stage: ZeroStage, iteration: int, step: int) -> float:
        if batch_size == 0:
            return 0.0
        trace = run_step(
            self.cluster, device_id, self.model, batch_size, stage,
            iteration=iteration, step=step,
        )
        return trace.compute

    def _segments(self, plan: AllocationPlan, stage: ZeroStage, iteration: int) -> List[SegmentReport]:
        comm = build_comm_profile(self.model, stage, self.cluster)
        optimizer = [d.optimizer_time for d in self.cluster.devices]
        segments: List[SegmentReport] = []

        if stage.synchronizes_per_step:
            schedules = [a.step_batches(plan.gas) for a in plan.assignments]
            for k in range(plan.gas):
                busy = tuple(
                    self._compute(i, schedule[k], stage, iteration, k) + comm.time_per_step
                    for i, schedule in enumerate(schedules)
                )
                segments.append(SegmentReport(label=f"micro_step_{k + 1}", busy=busy, T=max(busy)))
            busy = tuple(opt + comm.time_per_iteration for opt in optimizer)
        else:
            accumulate = []
            for i, assignment in enumerate(plan.assignments):
                schedule = assignment.step_batches(assignment.accumulation_steps)
                compute = 0.0
                for k, batch_size in enumerate(schedule):
                    compute += self._compute(i, batch_size, stage, iteration, k)
                accumulate.append(compute + comm.time_per_iteration)
            segments.append(SegmentReport(label="accumulate", busy=tuple(accumulate), T=max(accumulate)))
            busy = tuple(optimizer)
        segments.append(SegmentReport(label="optimizer", busy=busy, T=max(busy)))
        return segments

    def _comm_total(self, plan: AllocationPlan, stage: ZeroStage) -> float:
        comm = build_comm_profile(self.model, stage, self.cluster)
        if stage.synchronizes_per_step:
            return plan.gas * comm.time_per_step + comm.time_per_iteration
        return comm.time_per_iteration

    def simulate_iteration(
        self,
        plan: AllocationPlan,
        stage: Optional[ZeroStage] = None,
        iteration: int = 0
    ) -> IterationReport:
        """Run one iteration of ``plan``.

        Raises:
            ValidationError: plan and cluster sizes differ
            OutOfMemoryError: a batch exceeds a device's true maximum
        """
        if len(plan.assignments) != self.cluster.size:
            raise ValidationError(
                "Plan does not match cluster size",
                field="assignments",
                value=len(plan.assignments),
            )
        if plan.peak_speeds and len(plan.peak_speeds) != self.cluster.size:
            raise ValidationError(
                "Plan peak speeds do not match cluster size",
                field="peak_speeds",
                value=len(plan.peak_speeds),
            )
        stage = ZeroStage(plan.stage if stage is None else stage)
        segments = self._segments(plan, stage, iteration)

        n = self.cluster.size
        busy = [0.0] * n
        T = 0.0
        for segment in segments:
            T += segment.T
            for i in range(n):
                busy[i] += segment.busy[i]
        idle = tuple(T - b for b in busy)
        under = realized_under_utilization(plan, idle)

        processed = sum(a.total_batch for a in plan.assignments)
        if processed != plan.gbs:
            raise InternalInconsistencyError(
                "Simulated iteration did not process gbs batches",
                details={"processed": processed, "gbs": plan.gbs},
            )
        return IterationReport(
            busy=tuple(busy),
            idle=idle,
            T=T,
            comm_total=self._comm_total(plan, stage),
            throughput=plan.gbs / T,
            flops_proxy=plan.gbs * self.model.batch_flops / T,
            processed_batches=processed,
            segments=tuple(segments),
            under_utilization=under,
            objective=math.fsum(under),
        )

    def simulate_run(
        self,
        plan: AllocationPlan,
        iterations: int,
        stage: Optional[ZeroStage] = None
    ) -> SimReport:
        """Average ``iterations`` simulated iterations."""
        if iterations < 1:
            raise ValidationError("Iterations must be at least 1", field="iterations", value=iterations)
        reports = [self.simulate_iteration(plan, stage, iteration=k) for k in range(iterations)]
        mean = self._mean_report(plan, reports)
        throughputs = np.array([r.throughput for r in reports])
        std = float(np.sqrt(np.mean((throughputs - mean.throughput) ** 2))) if iterations > 1 else 0.0
        logger.info(
            "Simulated %s over %d iterations: T=%.6f throughput=%.4f",
            plan.strategy.value, iterations, mean.T, mean.throughput,
        )
        return SimReport(
            strategy=plan.strategy.value,
            iterations=iterations,
            mean=mean,
            throughput_std=std,
        )

    @staticmethod
    def _mean_report(plan: AllocationPlan, reports: Sequence[IterationReport]) -> IterationReport:
        if len(reports) == 1:
            return reports[0]
        n = len(reports[0].busy)
        T = _stable_mean([r.T for r in reports])
        busy = tuple(_stable_mean([r.busy[i] for r in reports]) for i in range(n))
        segments = tuple(
            SegmentReport(
                label=seg.label,
                busy=tuple(_stable_mean([r.segments[s].busy[i] for r in reports]) for i in range(n)),
                T=_stable_mean([r.segments[s].T for r in reports]),
            )
            for s, seg in enumerate(reports[0].segments)
        )
        idle = tuple(T - b for b in busy)
        under = realized_under_utilization(plan, idle)
        return IterationReport(
            busy=busy,
            idle=idle,
            T=T,
            comm_total=_stable_mean([r.comm_total for r in reports]),
            throughput=plan.gbs / T,
            flops_proxy=_stable_mean([r.flops_proxy for r in reports]),
            processed_batches=reports[0].processed_batches,
            segments=segments,
            under_utilization=under,
            objective=math.fsum(under),
        )

    def compare_plans(
        self,
        plan_a: AllocationPlan,
        plan_b: AllocationPlan,
        iterations: int,
        stage: Optional[ZeroStage] = None
    ) -> float:
        """Throughput of ``plan_a`` over throughput of ``plan_b``."""
        run_a = self.simulate_run(plan_a, iterations, stage)
        run_b = self.simulate_run(plan_b, iterations, stage)
        return run_a.mean.throughput / run_b.mean.throughput


def simulate_iteration(
    cluster: ClusterGroundTruth,
    model: ModelSpec,
    plan: AllocationPlan,
    stage: Optional[ZeroStage] = None
) -> IterationReport:
    return ClusterSimulator(cluster, model).simulate_iteration(plan, stage)


def simulate_run(
    cluster: ClusterGroundTruth,
    model: ModelSpec,
    plan: AllocationPlan,
    iterations: int,
    stage: Optional[ZeroStage] = None
) -> SimReport:
    return ClusterSimulator(cluster, model).simulate_run(plan, iterations, stage)


def compare_plans(
    cluster: ClusterGroundTruth,
    model: ModelSpec,
    stage: Optional[ZeroStage],
    plan_a: AllocationPlan,
    plan_b: AllocationPlan,
    iterations: int
) -> float:
    return ClusterSimulator(cluster, model).compare_plans(plan_a, plan_b, iterations, stage)
