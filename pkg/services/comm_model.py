"""Collective communication volumes and times for each ZeRO stage.

Flat latency + volume/bottleneck-bandwidth cost model. Schedule per stage,
with P = Ψ·bytes_per_param:

    stage 0/1  once per iteration: all-reduce 2P
    stage 2    every micro-step: gradient reduce-scatter P
               once per iteration: parameter all-gather P
    stage 3    every micro-step: forward all-gather P, backward
               all-gather P, reduce-scatter P
"""

from typing import Dict

from core.exceptions import ValidationError
from core.models import ClusterGroundTruth, CommProfile, ModelSpec, ZeroStage

STAGE_MULTIPLIER: Dict[ZeroStage, int] = {
    ZeroStage.STAGE_0: 2,
    ZeroStage.STAGE_1: 2,
    ZeroStage.STAGE_2: 2,
    ZeroStage.STAGE_3: 3,
}


def ffn_comm_breakdown(hidden_size: int, num_layers: int) -> Dict[str, int]:
    """Element counts moved by a feed-forward stack under full sharding."""
    if hidden_size < 1 or num_layers < 1:
        raise ValidationError(
            "Hidden size and layer count must be positive",
            field="hidden_size" if hidden_size < 1 else "num_layers",
            value=hidden_size if hidden_size < 1 else num_layers,
        )
    unit = 8 * num_layers * hidden_size * hidden_size
    return {
        "forward_allgather": unit,
        "backward_allgather": unit,
        "reduce_scatter": unit,
    }


def ffn_comm_volume(hidden_size: int, num_layers: int) -> int:
    """Exactly 24·d·h² elements."""
    return sum(ffn_comm_breakdown(hidden_size, num_layers).values())


def stage_comm_volume(model: ModelSpec, stage: ZeroStage) -> float:
    """Bytes moved per optimizer-synchronized step."""
    return STAGE_MULTIPLIER[ZeroStage(stage)] * float(model.param_count) * model.bytes_per_param


def collective_time(volume: float, cluster: ClusterGroundTruth) -> float:
    """Seconds for a collective; the slowest link is the bottleneck."""
    if volume < 0:
        raise ValidationError("Volume must be non-negative", field="volume", value=volume)
    if not cluster.link_bandwidths:
        raise ValidationError("Cluster has no links", field="link_bandwidths", value=0)
    return cluster.link_latency + volume / min(cluster.link_bandwidths)


def build_comm_profile(model: ModelSpec, stage: ZeroStage, cluster: ClusterGroundTruth) -> CommProfile:
    """Volumes per phase and the per-step / per-iteration collective times."""
    stage = ZeroStage(stage)
    shard = float(model.param_count) * model.bytes_per_param
    if stage == ZeroStage.STAGE_3:
        forward, backward, optimizer = shard, 2.0 * shard, 0.0
    elif stage == ZeroStage.STAGE_2:
        forward, backward, optimizer = 0.0, shard, shard
    else:
        forward, backward, optimizer = 0.0, 0.0, stage_comm_volume(model, stage)

    per_step = forward + backward
    return CommProfile(
        stage=stage,
        volume_forward=forward,
        volume_backward=backward,
        volume_optimizer=optimizer,
        time_per_step=collective_time(per_step, cluster) if per_step > 0 else 0.0,
        time_per_iteration=collective_time(optimizer, cluster) if optimizer > 0 else 0.0,
    )
