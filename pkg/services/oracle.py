"""Exhaustive search on small instances, used to validate the planner."""

import itertools
import logging
from typing import Iterator, Sequence, Tuple

from core.exceptions import InstanceTooLargeError, ValidationError
from core.models import OracleResult

logger = logging.getLogger(__name__)

ZERO01_MAX_DEVICES = 4
ZERO01_MAX_GBS = 32
ZERO23_MAX_DEVICES = 3
ZERO23_MAX_CAP = 8
ZERO23_MAX_GBS = 24


def _guard(name: str, value: int, limit: int) -> None:
    if value > limit:
        raise InstanceTooLargeError(
            f"Instance too large for exhaustive search ({name} > {limit})",
            field=name,
            value=value,
        )


def _compositions(total: int, caps: Sequence[int]) -> Iterator[Tuple[int, ...]]:
    """Every (a_1..a_n) with Σ a_i = total and 0 ≤ a_i ≤ cap_i."""
    if len(caps) == 1:
        if 0 <= total <= caps[0]:
            yield (total,)
        return
    for first in range(min(total, caps[0]) + 1):
        for rest in _compositions(total - first, caps[1:]):
            yield (first,) + rest


def brute_force_zero01(
    gbs: int,
    speeds: Sequence[float],
    caps: Sequence[int]
) -> OracleResult:
    """Best split of ``gbs`` totals with t_i = a_i / speed_i.

    Minimizes T = max t_i and, separately, Σ (T − t_i)·speed_i.
    """
    if len(speeds) != len(caps):
        raise ValidationError("One cap per device", field="caps", value=len(caps))
    if any(s <= 0 for s in speeds):
        raise ValidationError("Speeds must be positive", field="speeds")
    _guard("devices", len(speeds), ZERO01_MAX_DEVICES)
    _guard("gbs", gbs, ZERO01_MAX_GBS)

    best_T, best_T_assignment = float("inf"), ()
    best_obj, best_obj_assignment = float("inf"), ()
    count = 0
    for assignment in _compositions(gbs, list(caps)):
        count += 1
        times = [a / s for a, s in zip(assignment, speeds)]
        T = max(times)
        objective = sum((T - t) * s for t, s in zip(times, speeds))
        if T < best_T:
            best_T, best_T_assignment = T, assignment
        if objective < best_obj:
            best_obj, best_obj_assignment = objective, assignment
    if count == 0:
        raise ValidationError("Caps cannot hold gbs", field="caps", value=sum(caps))
    return OracleResult(
        assignment=best_T_assignment,
        value=best_T,
        enumerated=count,
        objective_assignment=best_obj_assignment,
        objective=best_obj,
    )


def brute_force_zero23(
    gbs: int,
    time_tables: Sequence[Sequence[float]],
    caps: Sequence[int],
    comm_per_step: float
) -> OracleResult:
    """Best per-step micro batches (b_1..b_n) under synchronized steps.

    ``time_tables[i][b]`` is the step time of device i at batch b (index 0
    unused). Each candidate costs (max_i time_i(b_i) + comm)·⌈gbs/Σb⌉.
    Pass predicted tables to isolate search error, latent tables to
    measure model and search error together.
    """
    if len(time_tables) != len(caps):
        raise ValidationError("One cap per device", field="caps", value=len(caps))
    _guard("devices", len(caps), ZERO23_MAX_DEVICES)
    _guard("cap", max(caps, default=0), ZERO23_MAX_CAP)
    _guard("gbs", gbs, ZERO23_MAX_GBS)
    for table, cap in zip(time_tables, caps):
        if len(table) <= cap:
            raise ValidationError("Time table shorter than cap", field="time_tables", value=len(table))

    best_wall, best_assignment, best_gas = float("inf"), (), None
    count = 0
    for assignment in itertools.product(*[range(cap + 1) for cap in caps]):
        micro = sum(assignment)
        if micro == 0:
            continue
        count += 1
        gas = -(-gbs // micro)
        step = max(table[b] if b > 0 else 0.0 for table, b in zip(time_tables, assignment))
        wall = (step + comm_per_step) * gas
        if wall < best_wall:
            best_wall, best_assignment, best_gas = wall, assignment, gas
    if count == 0:
        raise ValidationError("Every cap is zero", field="caps", value=0)
    logger.debug("Oracle enumerated %d assignments, best wall %.6f", count, best_wall)
    return OracleResult(
        assignment=best_assignment,
        value=best_wall,
        enumerated=count,
        gas=best_gas,
    )
