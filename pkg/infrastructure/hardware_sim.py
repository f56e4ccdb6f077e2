"""Simulated heterogeneous accelerators.

Each device follows an affine latent model: a step on batch b costs
compute_fixed + compute_per_batch·b seconds and needs
resident_state + act_mem_per_batch·b bytes. Exceeding total memory raises
OutOfMemoryError exactly like a caught accelerator OOM.
"""

import hashlib
import json
import logging
from typing import Sequence

import numpy as np

from core.exceptions import OutOfMemoryError, ValidationError
from core.interfaces import IDeviceBackend
from core.models import (
    ClusterGroundTruth,
    MemoryProbe,
    ModelSpec,
    StepTrace,
    ZeroStage,
)
from services.comm_model import build_comm_profile

logger = logging.getLogger(__name__)

FORWARD_SHARE = 1.0 / 3.0


def resident_state_bytes(model: ModelSpec, stage: ZeroStage, num_devices: int) -> float:
    """Per-device bytes of parameters, gradients and optimizer state.

    Stage 1 shards optimizer state, stage 2 adds gradients, stage 3 adds
    parameters. With the default 2/2/12 split and n devices:
    16Ψ, 4Ψ + 12Ψ/n, 2Ψ + 14Ψ/n, 16Ψ/n.
    """
    if num_devices < 1:
        raise ValidationError("Cluster needs at least one device", field="num_devices", value=num_devices)
    psi = float(model.param_count)
    params = model.param_state_bytes * psi
    grads = model.grad_state_bytes * psi
    optimizer = model.optimizer_state_bytes * psi
    stage = ZeroStage(stage)
    if stage == ZeroStage.STAGE_0:
        return params + grads + optimizer
    if stage == ZeroStage.STAGE_1:
        return params + grads + optimizer / num_devices
    if stage == ZeroStage.STAGE_2:
        return params + (grads + optimizer) / num_devices
    return (params + grads + optimizer) / num_devices


def _check_device(cluster: ClusterGroundTruth, device_id: int) -> None:
    if not 0 <= device_id < cluster.size:
        raise ValidationError("Unknown device", field="device_id", value=device_id)


def memory_probe(
    cluster: ClusterGroundTruth,
    device_id: int,
    model: ModelSpec,
    stage: ZeroStage
) -> MemoryProbe:
    """Readings before and after a batch-1 forward pass."""
    _check_device(cluster, device_id)
    device = cluster.device(device_id)
    before = resident_state_bytes(model, stage, cluster.size)
    after = before + device.act_mem_per_batch
    if after > device.total_mem:
        raise OutOfMemoryError(device_id, 1, after, device.total_mem)
    return MemoryProbe(before_forward=before, after_forward=after, total=device.total_mem)


def _jitter_factor(
    cluster: ClusterGroundTruth,
    device_id: int,
    batch_size: int,
    stage: ZeroStage,
    iteration: int,
    step: int
) -> float:
    if cluster.jitter <= 0.0:
        return 1.0
    rng = np.random.default_rng([cluster.seed, device_id, batch_size, int(stage), iteration, step])
    return 1.0 + cluster.jitter * float(rng.uniform(-1.0, 1.0))


def run_step(
    cluster: ClusterGroundTruth,
    device_id: int,
    model: ModelSpec,
    batch_size: int,
    stage: ZeroStage,
    *,
    iteration: int = 0,
    step: int = 0
) -> StepTrace:
    """Simulate one training step of ``batch_size`` samples.

    Raises:
        ValidationError: batch size below 1 or unknown device
        OutOfMemoryError: resident state plus activations exceed memory
    """
    _check_device(cluster, device_id)
    if batch_size < 1:
        raise ValidationError("Batch size must be at least 1", field="batch_size", value=batch_size)
    stage = ZeroStage(stage)
    device = cluster.device(device_id)
    required = resident_state_bytes(model, stage, cluster.size) + device.act_mem_per_batch * batch_size
    if required > device.total_mem:
        raise OutOfMemoryError(device_id, batch_size, required, device.total_mem)

    compute = device.compute_time(batch_size)
    compute *= _jitter_factor(cluster, device_id, batch_size, stage, iteration, step)
    forward = compute * FORWARD_SHARE
    backward = compute - forward

    comm = build_comm_profile(model, stage, cluster)
    if stage == ZeroStage.STAGE_3:
        third = comm.time_per_step / 3.0
        return StepTrace(
            forward_compute=forward,
            backward_compute=backward,
            optimizer_step=device.optimizer_time,
            forward_allgather=third,
            backward_allgather=third,
            reduce_scatter=third,
        )
    if stage == ZeroStage.STAGE_2:
        return StepTrace(
            forward_compute=forward,
            backward_compute=backward,
            optimizer_step=device.optimizer_time,
            reduce_scatter=comm.time_per_step,
            param_allgather=comm.time_per_iteration,
        )
    return StepTrace(
        forward_compute=forward,
        backward_compute=backward,
        optimizer_step=device.optimizer_time,
        allreduce=comm.time_per_iteration,
    )


class SimulatedCluster(IDeviceBackend):
    """Device backend over a latent cluster and model."""

    def __init__(self, cluster: ClusterGroundTruth, model: ModelSpec):
        if len(cluster.link_bandwidths) != cluster.size:
            raise ValidationError(
                "One link bandwidth per device is required",
                field="link_bandwidths",
                value=len(cluster.link_bandwidths),
            )
        if cluster.size == 0:
            raise ValidationError("Cluster has no devices", field="devices", value=0)
        self.cluster = cluster
        self.model = model

    def device_ids(self) -> Sequence[int]:
        return list(range(self.cluster.size))

    def device_name(self, device_id: int) -> str:
        return self.cluster.device(device_id).name

    def memory_probe(self, device_id: int, stage: ZeroStage) -> MemoryProbe:
        return memory_probe(self.cluster, device_id, self.model, stage)

    def run_step(self, device_id: int, batch_size: int, stage: ZeroStage) -> StepTrace:
        logger.debug("Probe device=%d batch=%d stage=%d", device_id, batch_size, int(stage))
        return run_step(self.cluster, device_id, self.model, batch_size, stage)

    def fingerprint(self) -> str:
        payload = json.dumps(
            {"cluster": self.cluster.to_dict(), "model": self.model.to_dict()},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()
