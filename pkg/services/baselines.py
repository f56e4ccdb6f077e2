"""Reference allocations the planner is compared against.

``uniform_plan`` is the homogeneous data-parallel split: equal shares and
one common micro batch no device can exceed. ``rated_capacity_plan``
splits by vendor peak ratings instead of measured speed. The device
groups give the homogeneous sub-clusters: only the slowest or only the
fastest hardware type, training alone on the same global batch.
"""

import dataclasses
import logging
from typing import Dict, List, Optional, Sequence, Tuple

from core.exceptions import ValidationError
from core.models import AllocationPlan, ClusterGroundTruth, CommProfile, PlanStrategy
from services.perf_model import PerfCurve
from services.planner import assemble_plan, device_assignment

logger = logging.getLogger(__name__)


def proportional_shares(gbs: int, weights: Sequence[float]) -> List[int]:
    """Largest-remainder split of ``gbs`` in proportion to ``weights``."""
    total_weight = float(sum(weights))
    if total_weight <= 0:
        raise ValidationError("Weights must have a positive sum", field="weights", value=total_weight)
    exact = [gbs * w / total_weight for w in weights]
    shares = [int(x) for x in exact]
    leftover = gbs - sum(shares)
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - shares[i]), i))
    for i in order[:leftover]:
        shares[i] += 1
    return shares


def uniform_plan(
    gbs: int,
    curves: Sequence[PerfCurve],
    comm_profile: CommProfile,
    optimizer_seconds: Optional[Sequence[float]] = None
) -> AllocationPlan:
    """Equal shares, one common micro batch, accumulation for the rest."""
    if gbs < 1:
        raise ValidationError("Global batch size must be at least 1", field="gbs", value=gbs)
    n = len(curves)
    shares = [gbs // n + (1 if i < gbs % n else 0) for i in range(n)]
    micro = min(max(shares), min(c.mbs for c in curves))
    assignments = [
        device_assignment(curve.device_id, min(micro, share), share, curve)
        for share, curve in zip(shares, curves)
    ]
    return assemble_plan(
        PlanStrategy.UNIFORM, comm_profile.stage, gbs, assignments, curves, comm_profile,
        optimizer_seconds,
    )


def rated_capacity_plan(
    gbs: int,
    curves: Sequence[PerfCurve],
    comm_profile: CommProfile,
    ratings: Sequence[Optional[float]],
    optimizer_seconds: Optional[Sequence[float]] = None
) -> AllocationPlan:
    """Shares proportional to rated peak FLOPs, each device at its own max batch."""
    if gbs < 1:
        raise ValidationError("Global batch size must be at least 1", field="gbs", value=gbs)
    if len(ratings) != len(curves):
        raise ValidationError("One rating per device", field="ratings", value=len(ratings))
    if any(r is None or r <= 0 for r in ratings):
        logger.warning("Missing device ratings, falling back to equal weights")
        weights = [1.0] * len(curves)
    else:
        weights = [float(r) for r in ratings]
    shares = proportional_shares(gbs, weights)
    assignments = [
        device_assignment(curve.device_id, min(share, curve.mbs), share, curve)
        for share, curve in zip(shares, curves)
    ]
    return assemble_plan(
        PlanStrategy.RATED_CAPACITY, comm_profile.stage, gbs, assignments, curves, comm_profile,
        optimizer_seconds,
    )


def device_groups(cluster: ClusterGroundTruth) -> List[Tuple[int, ...]]:
    """Device indices grouped by identical hardware, in first-seen order."""
    groups: Dict[Tuple[float, ...], List[int]] = {}
    for i, device in enumerate(cluster.devices):
        key = (
            device.total_mem,
            device.act_mem_per_batch,
            device.compute_fixed,
            device.compute_per_batch,
            device.optimizer_time,
            cluster.link_bandwidths[i],
        )
        groups.setdefault(key, []).append(i)
    return [tuple(indices) for indices in groups.values()]


def subcluster(cluster: ClusterGroundTruth, indices: Sequence[int]) -> ClusterGroundTruth:
    """Cluster of the given devices only, renumbered from 0."""
    if not indices:
        raise ValidationError("A sub-cluster needs at least one device", field="indices", value=0)
    devices = tuple(dataclasses.replace(cluster.devices[i], id=j) for j, i in enumerate(indices))
    return dataclasses.replace(
        cluster,
        devices=devices,
        link_bandwidths=tuple(cluster.link_bandwidths[i] for i in indices),
    )


def homogeneous_groups(
    cluster: ClusterGroundTruth,
    curves: Sequence[PerfCurve]
) -> Dict[str, Tuple[int, ...]]:
    """Slowest and fastest hardware groups by mean measured peak speed.

    Empty when the cluster has a single hardware type.
    """
    if len(curves) != cluster.size:
        raise ValidationError("One curve per device", field="curves", value=len(curves))
    groups = device_groups(cluster)
    if len(groups) < 2:
        return {}

    def mean_speed(group: Tuple[int, ...]) -> float:
        return sum(curves[i].peak_speed for i in group) / len(group)

    ranked = sorted(groups, key=lambda group: (mean_speed(group), group[0]))
    return {"slowest_group": ranked[0], "fastest_group": ranked[-1]}
