"""Online profiling of maximum batch size and step time per device.

For each device: a batch-1 memory probe gives a linear estimate of the
maximum batch size, exponential probes (1, 2, 4, ...) run up to that
estimate or the first OOM, and a binary search inside the last bracket
pins the exact threshold. Every successful probe contributes a
(batch size, compute seconds) sample for curve fitting.
"""

import asyncio
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from core.config import Settings
from core.exceptions import (
    InternalInconsistencyError,
    ModelTooLargeError,
    OutOfMemoryError,
    ValidationError,
)
from core.interfaces import IDeviceBackend, IProfiler
from core.models import (
    AUTO_STAGE,
    ClusterGroundTruth,
    DeviceProfile,
    ModelSpec,
    ProfileResult,
    Sample,
    StageRequest,
    StepTrace,
    ZeroStage,
)
from infrastructure.hardware_sim import SimulatedCluster

logger = logging.getLogger(__name__)

# Collectives issued inside the timed step window, per stage.
EXCLUDED_COLLECTIVES: Dict[ZeroStage, Tuple[str, ...]] = {
    ZeroStage.STAGE_0: (),
    ZeroStage.STAGE_1: (),
    ZeroStage.STAGE_2: ("reduce_scatter",),
    ZeroStage.STAGE_3: ("forward_allgather", "backward_allgather", "reduce_scatter"),
}
STEP_WINDOW: Dict[ZeroStage, Tuple[str, ...]] = {
    stage: ("forward_compute", "backward_compute") + excluded
    for stage, excluded in EXCLUDED_COLLECTIVES.items()
}


def time_consumed_during_step(trace: StepTrace, stage: ZeroStage) -> float:
    """GPU compute seconds of a step, with in-window collectives removed.

    Stages 0/1 synchronize after the step, so forward and backward are
    counted directly. Stages 2/3 communicate inside the window and their
    collectives are subtracted.

    Raises:
        InternalInconsistencyError: a component or the result is negative
    """
    stage = ZeroStage(stage)
    excluded = EXCLUDED_COLLECTIVES[stage]
    consumed = 0.0
    for name in STEP_WINDOW[stage]:
        value = getattr(trace, name)
        if value < 0:
            raise InternalInconsistencyError(
                f"Negative {name} in step trace",
                details={"field": name, "value": value},
            )
        if name not in excluded:
            consumed += value
    if consumed < 0:
        raise InternalInconsistencyError("Negative time consumed", details={"value": consumed})
    return consumed


@dataclass
class _ProbeLog:
    samples: Dict[int, float] = field(default_factory=dict)
    probes: int = 0
    seconds: float = 0.0
    optimizer_seconds: float = 0.0
    oom: Optional[OutOfMemoryError] = None


class Profiler(IProfiler):
    """Profiles every device of a backend at a given or automatic stage."""

    def __init__(self, parallel: bool = True):
        self._parallel = parallel

    def estimate_theoretical_mbs(
        self, backend: IDeviceBackend, device_id: int, stage: ZeroStage
    ) -> int:
        """Linear memory extrapolation from a single batch-1 probe.

        Raises:
            OutOfMemoryError: batch 1 does not fit (stage escalation needed)
        """
        probe = backend.memory_probe(device_id, stage)
        slope = probe.after_forward - probe.before_forward
        if slope <= 0:
            raise InternalInconsistencyError(
                "Non-positive activation slope",
                details={"device_id": device_id, "slope": slope},
            )
        return max(1, math.floor((probe.total - probe.before_forward) / slope))

    def _probe(
        self,
        backend: IDeviceBackend,
        device_id: int,
        stage: ZeroStage,
        batch_size: int,
        log: _ProbeLog
    ) -> bool:
        log.probes += 1
        try:
            trace = backend.run_step(device_id, batch_size, stage)
        except OutOfMemoryError as exc:
            logger.debug("Device %d OOM at batch %d", device_id, batch_size)
            log.oom = exc
            return False
        log.samples[batch_size] = time_consumed_during_step(trace, stage)
        log.seconds += trace.elapsed
        log.optimizer_seconds = trace.optimizer_step
        return True

    def search_mbs(
        self,
        backend: IDeviceBackend,
        device_id: int,
        stage: ZeroStage,
        mbs_estimate: int
    ) -> Tuple[int, List[Sample], int]:
        """Exponential then binary search for the largest fitting batch.

        Returns:
            (mbs, samples sorted by batch size, probes used)
        """
        mbs, log = self._search(backend, device_id, stage, mbs_estimate)
        return mbs, sorted(log.samples.items()), log.probes

    def _search(
        self,
        backend: IDeviceBackend,
        device_id: int,
        stage: ZeroStage,
        mbs_estimate: int
    ) -> Tuple[int, _ProbeLog]:
        if mbs_estimate < 1:
            raise ValidationError("Estimate must be at least 1", field="mbs_estimate", value=mbs_estimate)
        log = _ProbeLog()
        last_ok, first_oom = 0, None
        batch_size = 1
        while True:
            batch_size = min(batch_size, mbs_estimate)
            if not self._probe(backend, device_id, stage, batch_size, log):
                first_oom = batch_size
                break
            last_ok = batch_size
            if batch_size == mbs_estimate:
                break
            batch_size *= 2

        if first_oom is None:
            return last_ok, log
        if last_ok == 0:
            raise log.oom

        low, high = last_ok, first_oom
        while high - low > 1:
            mid = (low + high) // 2
            if self._probe(backend, device_id, stage, mid, log):
                low = mid
            else:
                high = mid
        return low, log

    def _profile_device(
        self, backend: IDeviceBackend, device_id: int, stage: ZeroStage
    ) -> DeviceProfile:
        estimate = self.estimate_theoretical_mbs(backend, device_id, stage)
        mbs, log = self._search(backend, device_id, stage, estimate)
        logger.info(
            "Device %d (%s): mbs=%d estimate=%d probes=%d",
            device_id, backend.device_name(device_id), mbs, estimate, log.probes,
        )
        return DeviceProfile(
            device_id=device_id,
            name=backend.device_name(device_id),
            mbs=mbs,
            mbs_estimate=estimate,
            samples=tuple(sorted(log.samples.items())),
            probes=log.probes,
            optimizer_seconds=log.optimizer_seconds,
            profiling_seconds=log.seconds,
        )

    def _first_fitting_stage(
        self, backend: IDeviceBackend, stage_request: StageRequest
    ) -> Tuple[ZeroStage, Tuple[int, ...]]:
        start = ZeroStage.STAGE_0 if stage_request == AUTO_STAGE else ZeroStage(stage_request)
        escalations: List[int] = []
        for stage in ZeroStage:
            if stage < start:
                continue
            try:
                for device_id in backend.device_ids():
                    backend.memory_probe(device_id, stage)
            except OutOfMemoryError as exc:
                logger.warning(
                    "Batch 1 does not fit on device %d at stage %d, escalating",
                    exc.device_id, int(stage),
                )
                escalations.append(int(stage))
                continue
            return stage, tuple(escalations)
        raise ModelTooLargeError(
            "Batch size 1 does not fit on every device even at stage 3",
            details={"escalations": escalations},
        )

    def profile_cluster(self, backend: IDeviceBackend, stage_request: StageRequest) -> ProfileResult:
        stage, escalations = self._first_fitting_stage(backend, stage_request)
        devices = tuple(self._profile_device(backend, d, stage) for d in backend.device_ids())
        return self._result(stage_request, stage, devices, escalations)

    async def aprofile_cluster(
        self, backend: IDeviceBackend, stage_request: StageRequest
    ) -> ProfileResult:
        if not self._parallel:
            return self.profile_cluster(backend, stage_request)
        stage, escalations = self._first_fitting_stage(backend, stage_request)
        devices = await asyncio.gather(*[
            asyncio.to_thread(self._profile_device, backend, d, stage)
            for d in backend.device_ids()
        ])
        return self._result(stage_request, stage, tuple(devices), escalations)

    @staticmethod
    def _result(
        stage_request: StageRequest,
        stage: ZeroStage,
        devices: Tuple[DeviceProfile, ...],
        escalations: Tuple[int, ...]
    ) -> ProfileResult:
        result = ProfileResult(
            stage_requested=stage_request,
            effective_stage=stage,
            devices=devices,
            escalations=escalations,
        )
        logger.info(
            "Profiled %d devices at stage %d with %d probes",
            len(devices), int(stage), result.probes_used,
        )
        return result


def create_profiler(settings: Settings) -> Profiler:
    """Create a profiler configured from settings."""
    return Profiler(parallel=settings.profile_in_parallel)


def profile_cluster(
    cluster: ClusterGroundTruth,
    model: ModelSpec,
    stage_request: StageRequest = AUTO_STAGE
) -> ProfileResult:
    """Profile a simulated cluster sequentially."""
    return Profiler(parallel=False).profile_cluster(SimulatedCluster(cluster, model), stage_request)
