"""Profiler tests: batch-size search, time accounting and stage escalation."""

import json
import math
import random
from typing import Sequence

import pytest

from core.exceptions import InternalInconsistencyError, ModelTooLargeError, OutOfMemoryError
from core.interfaces import IDeviceBackend
from core.models import (
    AUTO_STAGE,
    ClusterGroundTruth,
    MemoryProbe,
    ModelSpec,
    StepTrace,
    ZeroStage,
)
from infrastructure.hardware_sim import SimulatedCluster
from repositories.report_repository import render_json
from services.profiler import Profiler, profile_cluster, time_consumed_during_step
from tests.conftest import GIB, make_device


def _reject_constant(name):
    raise AssertionError(f"non-finite value {name} in JSON")


class ThresholdBackend(IDeviceBackend):
    """One device that fits exactly ``mbs`` batches but reports ``estimate`` from its memory probe."""

    def __init__(self, mbs: int, estimate: int):
        self.mbs = mbs
        self.estimate = estimate
        self.calls = []

    def device_ids(self) -> Sequence[int]:
        return [0]

    def device_name(self, device_id: int) -> str:
        return "fake"

    def memory_probe(self, device_id: int, stage: ZeroStage) -> MemoryProbe:
        return MemoryProbe(before_forward=0.0, after_forward=1.0, total=float(self.estimate))

    def run_step(self, device_id: int, batch_size: int, stage: ZeroStage) -> StepTrace:
        self.calls.append(batch_size)
        if batch_size > self.mbs:
            raise OutOfMemoryError(device_id, batch_size, float(batch_size), float(self.mbs))
        return StepTrace(forward_compute=0.01 * batch_size, backward_compute=0.02 * batch_size, optimizer_step=0.0)

    def fingerprint(self) -> str:
        return f"threshold-{self.mbs}-{self.estimate}"


def _random_device_cluster(rng: random.Random, model: ModelSpec):
    mbs = rng.randint(1, 4096)
    act = 1 << 20
    resident = 16 * model.param_count
    device = make_device(
        0, rng.uniform(0.001, 0.01),
        total_mem=resident + mbs * act + rng.randrange(act),
        act_mem_per_batch=act,
    )
    return ClusterGroundTruth(devices=(device,), link_bandwidths=(1e10,)), mbs


class TestSearchMbs:
    """Exponential plus binary search."""

    def test_exact_threshold_on_random_devices(self, small_model):
        """Test: 1,000 latent devices, exact mbs, no OOM result, bounded probes."""
        rng = random.Random(2024)
        profiler = Profiler(parallel=False)
        for _ in range(1000):
            cluster, mbs = _random_device_cluster(rng, small_model)
            backend = SimulatedCluster(cluster, small_model)
            estimate = profiler.estimate_theoretical_mbs(backend, 0, ZeroStage.STAGE_0)
            found, samples, probes = profiler.search_mbs(backend, 0, ZeroStage.STAGE_0, estimate)
            assert found == mbs
            assert samples[-1][0] == mbs
            assert probes <= 2 * max(1, math.ceil(math.log2(mbs))) + 4

    def test_overestimate_falls_back_to_binary_search(self):
        """Test: an optimistic estimate still yields the exact threshold."""
        rng = random.Random(5)
        profiler = Profiler(parallel=False)
        for _ in range(200):
            mbs = rng.randint(1, 4096)
            backend = ThresholdBackend(mbs, estimate=mbs + rng.randint(1, 4096))
            found, samples, probes = profiler.search_mbs(backend, 0, ZeroStage.STAGE_0, backend.estimate)
            assert found == mbs
            assert all(b <= mbs for b, _ in samples)
            assert probes <= 2 * max(1, math.ceil(math.log2(mbs))) + 4

    def test_underestimate_stops_at_estimate(self):
        """Test: the search never probes beyond the estimate."""
        backend = ThresholdBackend(mbs=100, estimate=40)
        found, _, _ = Profiler(parallel=False).search_mbs(backend, 0, ZeroStage.STAGE_0, 40)
        assert found == 40
        assert max(backend.calls) == 40

    def test_exponential_probe_sequence(self):
        """Test: probes double from 1 and are capped at the estimate."""
        backend = ThresholdBackend(mbs=20, estimate=20)
        Profiler(parallel=False).search_mbs(backend, 0, ZeroStage.STAGE_0, 20)
        assert backend.calls == [1, 2, 4, 8, 16, 20]

    def test_batch_one_oom_raises(self):
        """Test: a device that cannot run batch 1 raises OutOfMemoryError."""
        backend = ThresholdBackend(mbs=0, estimate=8)
        with pytest.raises(OutOfMemoryError):
            Profiler(parallel=False).search_mbs(backend, 0, ZeroStage.STAGE_0, 8)

    def test_batch_one_oom_reports_real_bytes(self):
        """Test: the batch-1 failure carries the device's byte counts and renders as strict JSON."""
        backend = ThresholdBackend(mbs=0, estimate=8)

        with pytest.raises(OutOfMemoryError) as exc_info:
            Profiler(parallel=False).search_mbs(backend, 0, ZeroStage.STAGE_0, 8)

        details = exc_info.value.to_dict()["details"]
        assert details["batch_size"] == 1
        assert details["required_bytes"] == 1.0
        assert details["total_bytes"] == 0.0
        json.loads(render_json(exc_info.value.to_dict()), parse_constant=_reject_constant)

    def test_samples_are_compute_seconds(self):
        """Test: each sample is (batch, forward + backward)."""
        backend = ThresholdBackend(mbs=4, estimate=4)
        _, samples, _ = Profiler(parallel=False).search_mbs(backend, 0, ZeroStage.STAGE_0, 4)
        assert samples == [(1, pytest.approx(0.03)), (2, pytest.approx(0.06)), (4, pytest.approx(0.12))]


class TestTimeConsumedDuringStep:
    """Per-stage inclusion and exclusion of collectives."""

    def test_every_stage_counts_compute_only(self):
        """Test: randomized traces yield forward + backward at every stage."""
        rng = random.Random(9)
        for _ in range(200):
            trace = StepTrace(*(rng.uniform(0.0, 1.0) for _ in range(8)))
            for stage in ZeroStage:
                assert time_consumed_during_step(trace, stage) == trace.forward_compute + trace.backward_compute

    def test_collectives_do_not_leak_into_stage3(self):
        """Test: stage-3 collectives are excluded from the step window."""
        trace = StepTrace(0.1, 0.2, 0.0, forward_allgather=5.0, backward_allgather=5.0, reduce_scatter=5.0)
        assert time_consumed_during_step(trace, ZeroStage.STAGE_3) == pytest.approx(0.3)

    def test_negative_component_raises(self):
        """Test: negative timings signal an internal inconsistency."""
        trace = StepTrace(-0.1, 0.2, 0.0)
        with pytest.raises(InternalInconsistencyError):
            time_consumed_during_step(trace, ZeroStage.STAGE_0)


class TestProfileCluster:
    """Whole-cluster profiling and stage escalation."""

    def test_profiles_every_device(self, hetero_cluster, model):
        """Test: acceptance cluster fits 58 batches per device at stage 0."""
        result = profile_cluster(hetero_cluster, model, ZeroStage.STAGE_0)
        assert result.effective_stage == ZeroStage.STAGE_0
        assert result.mbs == [58, 58, 58, 58]
        assert result.escalations == ()
        assert result.probes_used == sum(d.probes for d in result.devices)

    def test_auto_escalates_to_first_fitting_stage(self):
        """Test: a model that only fits when fully sharded lands on stage 3."""
        model = ModelSpec(param_count=GIB // 16, hidden_size=64, num_layers=1)
        devices = tuple(make_device(i, 0.01, total_mem=0.3 * GIB, act_mem_per_batch=GIB // 64) for i in range(4))
        cluster = ClusterGroundTruth(devices=devices, link_bandwidths=(1e10,) * 4)
        result = profile_cluster(cluster, model, AUTO_STAGE)
        assert result.effective_stage == ZeroStage.STAGE_3
        assert result.escalations == (0, 1, 2)
        assert result.stage_requested == AUTO_STAGE

    def test_model_too_large(self):
        """Test: no stage fits batch 1."""
        model = ModelSpec(param_count=GIB, hidden_size=64, num_layers=1)
        cluster = ClusterGroundTruth(devices=(make_device(0, 0.01, total_mem=GIB),), link_bandwidths=(1e10,))
        with pytest.raises(ModelTooLargeError):
            profile_cluster(cluster, model, AUTO_STAGE)

    async def test_async_matches_sequential(self, hetero_cluster, model):
        """Test: the concurrent path returns the same profile."""
        backend = SimulatedCluster(hetero_cluster, model)
        sequential = Profiler(parallel=False).profile_cluster(backend, ZeroStage.STAGE_3)
        concurrent = await Profiler(parallel=True).aprofile_cluster(backend, ZeroStage.STAGE_3)
        assert concurrent == sequential

    def test_profile_round_trips_through_dict(self, hetero_cluster, model):
        """Test: ProfileResult survives to_dict/from_dict."""
        from core.models import ProfileResult
        result = profile_cluster(hetero_cluster, model, AUTO_STAGE)
        assert ProfileResult.from_dict(result.to_dict()) == result
