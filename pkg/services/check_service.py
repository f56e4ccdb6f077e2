"""Planner self-check against exhaustive search and the latent cluster."""

import logging
import random
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from core.config import Settings
from core.models import (
    ClusterGroundTruth,
    CommProfile,
    DeviceGroundTruth,
    ExperimentSpec,
    ModelSpec,
    ZeroStage,
)
from infrastructure.hardware_sim import SimulatedCluster
from services.comm_model import build_comm_profile
from services.oracle import brute_force_zero01, brute_force_zero23
from services.perf_model import PerfCurve, curve_fit_error, curves_from_profile
from services.planner import BatchPlanner, plan_zero01, plan_zero23
from services.profiler import Profiler
from services.simulator import ClusterSimulator

logger = logging.getLogger(__name__)

GIB = 1 << 30
CHECK_MODEL = ModelSpec(param_count=1_000_000, hidden_size=64, num_layers=2)


@dataclass(frozen=True)
class CheckInstance:
    """A random small cluster with a batch size and per-step comm time."""
    index: int
    cluster: ClusterGroundTruth
    gbs: int
    comm_per_step: float


def random_instance(rng: random.Random, index: int) -> CheckInstance:
    """At most 3 devices, true mbs at most 8, gbs at most 24."""
    n = rng.randint(1, 3)
    resident = 16 * CHECK_MODEL.param_count
    devices = []
    for i in range(n):
        mbs = rng.randint(1, 8)
        devices.append(DeviceGroundTruth(
            id=i,
            name=f"dev{i}",
            total_mem=float(resident + mbs * GIB + rng.randrange(GIB)),
            act_mem_per_batch=float(GIB),
            compute_fixed=rng.uniform(0.01, 0.1),
            compute_per_batch=rng.uniform(0.01, 0.1),
        ))
    cluster = ClusterGroundTruth(
        devices=tuple(devices),
        link_bandwidths=tuple(1e10 for _ in devices),
        seed=index,
    )
    return CheckInstance(
        index=index,
        cluster=cluster,
        gbs=rng.randint(1, 24),
        comm_per_step=rng.uniform(0.0, 0.3),
    )


def _comm(stage: ZeroStage, per_step: float) -> CommProfile:
    return CommProfile(
        stage=stage,
        volume_forward=0.0,
        volume_backward=0.0,
        volume_optimizer=0.0,
        time_per_step=per_step,
        time_per_iteration=0.0,
    )


def _predicted_tables(curves: List[PerfCurve]) -> List[List[float]]:
    return [[0.0] + list(c.step_time_table) for c in curves]


def _latent_tables(cluster: ClusterGroundTruth, curves: List[PerfCurve]) -> List[List[float]]:
    return [
        [0.0] + [cluster.device(c.device_id).compute_time(b) for b in range(1, c.mbs + 1)]
        for c in curves
    ]


class CheckSuite:
    """Compares planner output to the oracle and the simulator."""

    def __init__(self, settings: Settings, profiler: Optional[Profiler] = None):
        self.settings = settings
        self.profiler = profiler or Profiler(parallel=False)

    def check_instance(self, instance: CheckInstance) -> Dict[str, Any]:
        backend = SimulatedCluster(instance.cluster, CHECK_MODEL)
        profile = self.profiler.profile_cluster(backend, ZeroStage.STAGE_0)
        curves = list(curves_from_profile(profile, self.settings.peak_tolerance, self.settings.speed_floor))
        caps = [c.mbs for c in curves]

        plan23 = plan_zero23(
            instance.gbs, curves, _comm(ZeroStage.STAGE_3, instance.comm_per_step),
            grid_points=self.settings.sweep_grid_points,
        )
        planner_wall = (plan23.sweep_time + instance.comm_per_step) * plan23.gas
        oracle23 = brute_force_zero23(instance.gbs, _predicted_tables(curves), caps, instance.comm_per_step)
        ratio23 = planner_wall / oracle23.value

        latent = _latent_tables(instance.cluster, curves)
        latent_oracle = brute_force_zero23(instance.gbs, latent, caps, instance.comm_per_step)
        latent_wall = (
            max(latent[i][b] for i, b in enumerate(plan23.micro_batches)) + instance.comm_per_step
        ) * plan23.gas

        constant = [PerfCurve.constant(c.device_id, c.peak_speed, c.mbs) for c in curves]
        plan01 = plan_zero01(instance.gbs, constant, _comm(ZeroStage.STAGE_0, 0.0))
        speeds = [c.peak_speed for c in curves]
        oracle01 = brute_force_zero01(instance.gbs, speeds, [instance.gbs] * len(curves))
        slack01 = oracle01.value + 1.0 / min(speeds)

        failures = []
        if ratio23 > self.settings.oracle_tolerance:
            failures.append(f"zero23 wall {planner_wall:.6f} vs oracle {oracle23.value:.6f}")
        if plan01.predicted_T > slack01 + 1e-9:
            failures.append(f"zero01 T {plan01.predicted_T:.6f} exceeds oracle bound {slack01:.6f}")
        return {
            "instance": instance.index,
            "devices": len(curves),
            "gbs": instance.gbs,
            "zero23_planner_wall": planner_wall,
            "zero23_oracle_wall": oracle23.value,
            "zero23_ratio": ratio23,
            "zero23_latent_ratio": latent_wall / latent_oracle.value,
            "zero01_planner_T": plan01.predicted_T,
            "zero01_oracle_T": oracle01.value,
            "passed": not failures,
            "failures": "; ".join(failures),
        }

    def check_spec_cluster(self, spec: ExperimentSpec, planner: BatchPlanner) -> Dict[str, Any]:
        """Plan-vs-simulation fidelity and curve fit error on the spec's own cluster."""
        backend = SimulatedCluster(spec.cluster, spec.model)
        profile = self.profiler.profile_cluster(backend, spec.stage)
        comm = build_comm_profile(spec.model, profile.effective_stage, spec.cluster)
        curves = planner.curves(profile)
        plan = planner.plan(spec.gbs, profile, comm, curves)
        simulated = ClusterSimulator(spec.cluster, spec.model).simulate_iteration(plan)
        fidelity = abs(plan.predicted_wall_time - simulated.T) / simulated.T
        fit_errors = [
            curve_fit_error(curve, spec.cluster.device(curve.device_id).compute_time)
            for curve in curves
        ]
        failures = []
        if spec.cluster.jitter == 0.0 and fidelity > self.settings.fidelity_tolerance:
            failures.append(f"prediction error {fidelity:.4f} above tolerance")
        return {
            "effective_stage": int(profile.effective_stage),
            "predicted_wall_time": plan.predicted_wall_time,
            "simulated_T": simulated.T,
            "prediction_error": fidelity,
            "curve_fit_error": fit_errors,
            "passed": not failures,
            "failures": "; ".join(failures),
        }

    def run(
        self,
        instances: int,
        seed: int,
        spec: Optional[ExperimentSpec] = None,
        planner: Optional[BatchPlanner] = None
    ) -> Dict[str, Any]:
        """Run ``instances`` random checks, plus the spec cluster when given."""
        rng = random.Random(seed)
        rows = [self.check_instance(random_instance(rng, k)) for k in range(instances)]
        failed = [row for row in rows if not row["passed"]]
        report: Dict[str, Any] = {
            "instances": instances,
            "seed": seed,
            "failed": len(failed),
            "rows": rows,
        }
        passed = not failed
        if spec is not None:
            spec_check = self.check_spec_cluster(spec, planner or BatchPlanner())
            report["spec_cluster"] = spec_check
            passed = passed and spec_check["passed"]
        report["passed"] = passed
        if passed:
            logger.info("Check suite passed on %d instances", instances)
        else:
            logger.warning("Check suite found %d failing instances", len(failed))
        return report


def run_check_suite(instances: int, seed: int, settings: Optional[Settings] = None) -> Dict[str, Any]:
    """Random oracle checks with default settings."""
    return CheckSuite(settings or Settings()).run(instances, seed)
