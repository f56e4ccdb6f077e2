"""Batch allocation across heterogeneous devices.

Stages 0/1 synchronize once per iteration, so each device gets a total
batch proportional to its peak speed and accumulates gradients at its own
pace. Stages 2/3 synchronize every micro-step, so the planner sweeps a
common per-step time budget t, lets every device take the largest batch
it finishes within t, and keeps the t minimizing (t + comm)·gas.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.config import Settings
from core.exceptions import InfeasiblePlanError, InternalInconsistencyError, ValidationError
from core.models import (
    AllocationPlan,
    CommProfile,
    DeviceAssignment,
    PlanMetrics,
    PlanStrategy,
    ProfileResult,
    ZeroStage,
)
from services.perf_model import (
    PEAK_TOLERANCE,
    SPEED_FLOOR,
    PerfCurve,
    curves_from_profile,
    predict_step_time,
    suffix_min_times,
)

logger = logging.getLogger(__name__)

SWEEP_GRID_POINTS = 512


def compute_plan_metrics(
    finish_times: Sequence[float],
    weights: Sequence[float]
) -> PlanMetrics:
    """Completion time, idle times, weighted under-utilization and objective.

    T = max t_i, δt_i = T − t_i, u_i = δt_i·p_i, objective = Σ u_i.
    """
    if len(finish_times) != len(weights):
        raise ValidationError(
            "finish_times and weights must have the same length",
            field="weights",
            value=len(weights),
        )
    if not finish_times:
        raise ValidationError("No devices", field="finish_times", value=0)
    if any(t < 0 for t in finish_times) or any(p < 0 for p in weights):
        raise ValidationError("Times and weights must be non-negative", field="finish_times")
    T = max(finish_times)
    idle = tuple(T - t for t in finish_times)
    under = tuple(d * p for d, p in zip(idle, weights))
    return PlanMetrics(T=T, idle=idle, under_utilization=under, objective=sum(under))


def _check_inputs(gbs: int, curves: Sequence[PerfCurve]) -> None:
    if gbs < 1:
        raise ValidationError("Global batch size must be at least 1", field="gbs", value=gbs)
    if not curves:
        raise ValidationError("No device curves", field="curves", value=0)


def allocate_remainder(
    gmbs: Sequence[int],
    curves: Sequence[PerfCurve],
    batch_remain: int
) -> List[int]:
    """Hand out leftover batches one at a time to the most under-utilized device.

    With time_optimal = (Σ gmbs + batch_remain) / Σ peak speeds, device i
    has δ_i = time_optimal − gmbs_i/speed_i and u_i = δ_i·speed_i. Each
    round the largest u_i receives one batch; ties go to the lowest index.
    """
    if batch_remain < 0:
        raise ValidationError("Remainder must be non-negative", field="batch_remain", value=batch_remain)
    if len(gmbs) != len(curves):
        raise ValidationError("One gmbs entry per curve", field="gmbs", value=len(gmbs))
    result = [int(g) for g in gmbs]
    if batch_remain == 0:
        return result
    speeds = np.array([c.peak_speed for c in curves], dtype=float)
    time_optimal = (sum(result) + batch_remain) / float(speeds.sum())
    for _ in range(batch_remain):
        current = np.array(result, dtype=float)
        under = (time_optimal - current / speeds) * speeds
        result[int(np.argmax(under))] += 1
    return result


def choose_micro_batch(total: int, curve: PerfCurve) -> int:
    """Micro batch for a device processing ``total`` batches per iteration.

    Keeps the minimal number of accumulation steps and, within that, the
    largest peak-range batch size dividing ``total`` exactly.
    """
    if total <= 0:
        return 0
    b_lo, b_hi = curve.peak_range
    if total < b_lo:
        return total
    cap = min(b_hi, total)
    steps = -(-total // cap)
    smallest = max(b_lo, -(-total // steps))
    for candidate in range(cap, smallest - 1, -1):
        if total % candidate == 0:
            return candidate
    return cap


def device_assignment(device_id: int, micro: int, total: int, curve: PerfCurve) -> DeviceAssignment:
    """Run ``total`` batches as ``micro``-sized steps with a smaller last step."""
    if micro == 0 or total == 0:
        return DeviceAssignment(device_id, 0, 0, 0, 0, 0.0)
    gas = -(-total // micro)
    last = total - (gas - 1) * micro
    finish = (gas - 1) * predict_step_time(curve, micro) + predict_step_time(curve, last)
    return DeviceAssignment(device_id, micro, total, last, gas, finish)


def predicted_wall_time(
    stage: ZeroStage,
    assignments: Sequence[DeviceAssignment],
    curves: Sequence[PerfCurve],
    comm_profile: CommProfile,
    optimizer_seconds: Sequence[float]
) -> float:
    """Predicted iteration time, segment by segment like the simulator."""
    optimizer = max(optimizer_seconds, default=0.0) + comm_profile.time_per_iteration
    if not ZeroStage(stage).synchronizes_per_step:
        return max(a.predicted_finish for a in assignments) + optimizer
    steps = max(a.accumulation_steps for a in assignments)
    schedules = [a.step_batches(steps) for a in assignments]
    total = 0.0
    for k in range(steps):
        step_time = max(
            (predict_step_time(curve, s[k]) if s[k] > 0 else 0.0)
            for curve, s in zip(curves, schedules)
        )
        total += step_time + comm_profile.time_per_step
    return total + optimizer


def assemble_plan(
    strategy: PlanStrategy,
    stage: ZeroStage,
    gbs: int,
    assignments: Sequence[DeviceAssignment],
    curves: Sequence[PerfCurve],
    comm_profile: CommProfile,
    optimizer_seconds: Optional[Sequence[float]] = None,
    sweep_time: Optional[float] = None
) -> AllocationPlan:
    """Attach metrics and the predicted wall time to a set of assignments."""
    assigned = sum(a.total_batch for a in assignments)
    if assigned != gbs:
        raise InternalInconsistencyError(
            "Assigned batches do not add up to gbs",
            details={"assigned": assigned, "gbs": gbs},
        )
    for assignment, curve in zip(assignments, curves):
        if assignment.micro_batch > curve.mbs or assignment.last_batch > assignment.micro_batch:
            raise InternalInconsistencyError(
                "Assignment violates batch bounds",
                details={"device_id": assignment.device_id},
            )
    optimizer_seconds = list(optimizer_seconds or [0.0] * len(curves))
    metrics = compute_plan_metrics(
        [a.predicted_finish for a in assignments],
        [c.peak_speed for c in curves],
    )
    return AllocationPlan(
        strategy=strategy,
        stage=ZeroStage(stage),
        gbs=gbs,
        assignments=tuple(assignments),
        gas=max(1, max(a.accumulation_steps for a in assignments)),
        metrics=metrics,
        predicted_wall_time=predicted_wall_time(stage, assignments, curves, comm_profile, optimizer_seconds),
        sweep_time=sweep_time,
        peak_speeds=tuple(c.peak_speed for c in curves),
    )


def plan_zero01(
    gbs: int,
    curves: Sequence[PerfCurve],
    comm_profile: CommProfile,
    optimizer_seconds: Optional[Sequence[float]] = None
) -> AllocationPlan:
    """Speed-proportional totals with per-device gradient accumulation."""
    _check_inputs(gbs, curves)
    speeds = [c.peak_speed for c in curves]
    time_optimal = gbs / sum(speeds)
    gmbs = [min(gbs, math.floor(time_optimal * s)) for s in speeds]
    while sum(gmbs) > gbs:
        worst = max(range(len(gmbs)), key=lambda i: (gmbs[i] / speeds[i], -i))
        gmbs[worst] -= 1
    gmbs = allocate_remainder(gmbs, curves, gbs - sum(gmbs))
    logger.debug("time_optimal=%.6f gmbs=%s", time_optimal, gmbs)

    assignments = [
        device_assignment(curve.device_id, choose_micro_batch(total, curve), total, curve)
        for total, curve in zip(gmbs, curves)
    ]
    return assemble_plan(
        PlanStrategy.ZERO01, comm_profile.stage, gbs, assignments, curves, comm_profile, optimizer_seconds
    )


def sweep_grid(curves: Sequence[PerfCurve], grid_points: int = SWEEP_GRID_POINTS) -> np.ndarray:
    """Evenly spaced budgets plus every predicted step time, sorted."""
    time_min = min(predict_step_time(c, 1) for c in curves)
    time_max = max(predict_step_time(c, c.mbs) for c in curves)
    knots = np.concatenate([np.asarray(c.step_time_table) for c in curves])
    grid = np.concatenate([np.linspace(time_min, time_max, grid_points), knots])
    return np.unique(grid)


def scale_last_step(micro_batches: Sequence[int], remaining: int) -> List[int]:
    """Shrink a step to ``remaining`` batches in proportion to ``micro_batches``.

    Largest-remainder rounding; ties go to the lowest index. Every result
    stays within [0, b_i].
    """
    micro = sum(micro_batches)
    if not 0 < remaining <= micro:
        raise InternalInconsistencyError(
            "Last step size out of range",
            details={"remaining": remaining, "micro": micro},
        )
    parts = [divmod(b * remaining, micro) for b in micro_batches]
    last = [q for q, _ in parts]
    extra = remaining - sum(last)
    order = sorted(range(len(parts)), key=lambda i: (-parts[i][1], i))
    for i in order[:extra]:
        last[i] += 1
    return last


def plan_zero23(
    gbs: int,
    curves: Sequence[PerfCurve],
    comm_profile: CommProfile,
    optimizer_seconds: Optional[Sequence[float]] = None,
    grid_points: int = SWEEP_GRID_POINTS
) -> AllocationPlan:
    """Sweep the per-step budget t and keep the smallest (t + comm)·gas."""
    _check_inputs(gbs, curves)
    comm = comm_profile.time_per_step
    grid = sweep_grid(curves, grid_points)
    batches = np.stack([
        np.searchsorted(suffix_min_times(c), grid, side="right") for c in curves
    ])
    micro = batches.sum(axis=0)
    feasible = micro > 0
    if not feasible.any():
        raise InfeasiblePlanError("No step budget yields a positive micro batch")
    gas = np.where(feasible, -(-gbs // np.maximum(micro, 1)), 0)
    wall = np.where(feasible, (grid + comm) * gas, np.inf)
    best = int(np.argmin(wall))
    logger.debug("Sweep over %d budgets, best t=%.6f wall=%.6f", len(grid), grid[best], wall[best])

    micro_batches = [int(b) for b in batches[:, best]]
    total_micro = sum(micro_batches)
    steps = -(-gbs // total_micro)
    last = scale_last_step(micro_batches, gbs - (steps - 1) * total_micro)

    assignments = []
    for curve, b, lbs in zip(curves, micro_batches, last):
        if b == 0:
            assignments.append(DeviceAssignment(curve.device_id, 0, 0, 0, 0, 0.0))
            continue
        finish = (steps - 1) * predict_step_time(curve, b)
        if lbs > 0:
            finish += predict_step_time(curve, lbs)
        assignments.append(
            DeviceAssignment(curve.device_id, b, (steps - 1) * b + lbs, lbs, steps, finish)
        )
    return assemble_plan(
        PlanStrategy.ZERO23, comm_profile.stage, gbs, assignments, curves, comm_profile,
        optimizer_seconds, sweep_time=float(grid[best]),
    )


class BatchPlanner:
    """Plans allocations from profiles with configured tolerances."""

    def __init__(
        self,
        grid_points: int = SWEEP_GRID_POINTS,
        peak_tolerance: float = PEAK_TOLERANCE,
        speed_floor: float = SPEED_FLOOR
    ):
        self.grid_points = grid_points
        self.peak_tolerance = peak_tolerance
        self.speed_floor = speed_floor

    def curves(self, profile: ProfileResult) -> Tuple[PerfCurve, ...]:
        return curves_from_profile(profile, self.peak_tolerance, self.speed_floor)

    def plan(
        self,
        gbs: int,
        profile: ProfileResult,
        comm_profile: CommProfile,
        curves: Optional[Sequence[PerfCurve]] = None
    ) -> AllocationPlan:
        """Dispatch on the communication profile's stage: 0/1 or 2/3."""
        if comm_profile.stage != profile.effective_stage:
            raise ValidationError(
                "Communication profile stage differs from the profiled stage",
                field="stage",
                value=int(comm_profile.stage),
            )
        curves = curves or self.curves(profile)
        optimizer = [d.optimizer_seconds for d in profile.devices]
        if comm_profile.stage.synchronizes_per_step:
            plan = plan_zero23(gbs, curves, comm_profile, optimizer, self.grid_points)
        else:
            plan = plan_zero01(gbs, curves, comm_profile, optimizer)
        logger.info(
            "Plan %s stage=%d gbs=%d micro=%s gas=%d predicted_wall=%.6f",
            plan.strategy.value, int(plan.stage), gbs, plan.micro_batches, plan.gas,
            plan.predicted_wall_time,
        )
        return plan


def create_planner(settings: Settings) -> BatchPlanner:
    """Create a planner configured from settings."""
    return BatchPlanner(
        grid_points=settings.sweep_grid_points,
        peak_tolerance=settings.peak_tolerance,
        speed_floor=settings.speed_floor,
    )
