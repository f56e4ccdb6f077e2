"""Shared fixtures: latent clusters, models and curves."""

from typing import Sequence

import pytest

from core.config import Settings
from core.models import (
    ClusterGroundTruth,
    CommProfile,
    DeviceGroundTruth,
    ModelSpec,
    ZeroStage,
)

GIB = 1 << 30
ACT_BYTES = 268435456  # 256 MiB per batch
DEVICE_MEM = 17179869184  # 16 GiB


def make_device(
    device_id: int,
    compute_per_batch: float,
    compute_fixed: float = 0.01,
    total_mem: float = DEVICE_MEM,
    act_mem_per_batch: float = ACT_BYTES,
    optimizer_time: float = 0.0,
    rated_tflops: float | None = None,
    name: str | None = None
) -> DeviceGroundTruth:
    return DeviceGroundTruth(
        id=device_id,
        name=name or f"gpu{device_id}",
        total_mem=float(total_mem),
        act_mem_per_batch=float(act_mem_per_batch),
        compute_fixed=compute_fixed,
        compute_per_batch=compute_per_batch,
        optimizer_time=optimizer_time,
        rated_tflops=rated_tflops,
    )


def make_cluster(
    per_batch: Sequence[float],
    bandwidth: float = 1.6e10,
    jitter: float = 0.0,
    seed: int = 0,
    **device_kwargs
) -> ClusterGroundTruth:
    devices = tuple(make_device(i, c, **device_kwargs) for i, c in enumerate(per_batch))
    return ClusterGroundTruth(
        devices=devices,
        link_bandwidths=tuple(bandwidth for _ in devices),
        seed=seed,
        jitter=jitter,
    )


def comm_profile(stage: ZeroStage, per_step: float = 0.0, per_iteration: float = 0.0) -> CommProfile:
    return CommProfile(
        stage=stage,
        volume_forward=0.0,
        volume_backward=0.0,
        volume_optimizer=0.0,
        time_per_step=per_step,
        time_per_iteration=per_iteration,
    )


@pytest.fixture
def settings():
    """Provide default settings with caching in memory."""
    return Settings()


@pytest.fixture
def model():
    """Provide a 100M-parameter model (1.6 GB resident at stage 0)."""
    return ModelSpec(param_count=100_000_000, hidden_size=1024, num_layers=8)


@pytest.fixture
def small_model():
    """Provide a 1M-parameter model."""
    return ModelSpec(param_count=1_000_000, hidden_size=64, num_layers=2)


@pytest.fixture
def hetero_cluster():
    """Two fast and two slow devices (2:1 latent speed ratio)."""
    return make_cluster([0.01, 0.01, 0.02, 0.02])


@pytest.fixture
def homo_cluster():
    """Four identical devices."""
    return make_cluster([0.01, 0.01, 0.01, 0.01])


@pytest.fixture
def spec_document():
    """Minimal valid spec document (two fast + two slow devices)."""
    return {
        "cluster": {
            "link_bandwidth": 1.6e10,
            "devices": [
                {"name": "fast", "count": 2, "total_mem": DEVICE_MEM, "act_mem_per_batch": ACT_BYTES,
                 "compute_fixed": 0.01, "compute_per_batch": 0.01, "rated_tflops": 312.0},
                {"name": "slow", "count": 2, "total_mem": DEVICE_MEM, "act_mem_per_batch": ACT_BYTES,
                 "compute_fixed": 0.01, "compute_per_batch": 0.02, "rated_tflops": 125.0},
            ],
        },
        "model": {"param_count": 100_000_000, "hidden_size": 1024, "num_layers": 8},
        "gbs": 256,
        "iterations": 3,
    }
