"""Communication volume and time tests."""

import random
from fractions import Fraction

import pytest

from core.exceptions import ValidationError
from core.models import ClusterGroundTruth, ModelSpec, ZeroStage
from services.comm_model import (
    STAGE_MULTIPLIER,
    build_comm_profile,
    collective_time,
    ffn_comm_breakdown,
    ffn_comm_volume,
    stage_comm_volume,
)
from tests.conftest import make_cluster, make_device


class TestVolumes:
    """Element and byte counts."""

    def test_ffn_volume_is_24_d_h_squared(self):
        """Test: 24·d·h² for random shapes, checked with exact arithmetic."""
        rng = random.Random(3)
        for _ in range(50):
            h, d = rng.randint(1, 20000), rng.randint(1, 200)
            assert Fraction(ffn_comm_volume(h, d)) == Fraction(24) * d * h * h

    def test_breakdown_has_three_equal_collectives(self):
        """Test: forward all-gather, backward all-gather and reduce-scatter of 8dh² each."""
        breakdown = ffn_comm_breakdown(16, 3)
        assert set(breakdown.values()) == {8 * 3 * 16 * 16}
        assert len(breakdown) == 3

    def test_invalid_shape_rejected(self):
        """Test: non-positive hidden size is invalid."""
        with pytest.raises(ValidationError):
            ffn_comm_volume(0, 4)

    def test_stage_multipliers(self):
        """Test: (2, 2, 2, 3)·Ψ·bytes_per_param."""
        model = ModelSpec(param_count=1000, hidden_size=8, num_layers=1, bytes_per_param=2)
        assert [STAGE_MULTIPLIER[s] for s in ZeroStage] == [2, 2, 2, 3]
        assert [stage_comm_volume(model, s) for s in ZeroStage] == [4000.0, 4000.0, 4000.0, 6000.0]


class TestCollectiveTime:
    """Latency plus bottleneck-bandwidth cost."""

    def test_bottleneck_link_dominates(self):
        """Test: the slowest link sets the time."""
        devices = (make_device(0, 0.01), make_device(1, 0.01))
        cluster = ClusterGroundTruth(devices=devices, link_bandwidths=(1e10, 1e9), link_latency=0.001)
        assert collective_time(1e9, cluster) == pytest.approx(1.001)

    def test_zero_volume_costs_latency(self):
        """Test: an empty collective still pays the launch latency."""
        cluster = ClusterGroundTruth(devices=(make_device(0, 0.01),), link_bandwidths=(1e10,), link_latency=0.002)
        assert collective_time(0.0, cluster) == 0.002

    def test_negative_volume_rejected(self):
        """Test: negative volume is invalid."""
        with pytest.raises(ValidationError):
            collective_time(-1.0, make_cluster([0.01]))


class TestCommProfile:
    """Per-stage schedule."""

    def test_volumes_sum_to_stage_volume(self, model):
        """Test: forward + backward + optimizer volumes equal the stage volume."""
        cluster = make_cluster([0.01, 0.02])
        for stage in ZeroStage:
            profile = build_comm_profile(model, stage, cluster)
            assert profile.volume_total == stage_comm_volume(model, stage)

    def test_stage0_synchronizes_once(self, model):
        """Test: stage 0 has no per-step collectives."""
        profile = build_comm_profile(model, ZeroStage.STAGE_0, make_cluster([0.01]))
        assert profile.time_per_step == 0.0
        assert profile.time_per_iteration == pytest.approx(4e8 / 1.6e10)

    def test_stage2_schedule(self, model):
        """Test: reduce-scatter per step, parameter all-gather per iteration."""
        profile = build_comm_profile(model, ZeroStage.STAGE_2, make_cluster([0.01]))
        assert profile.volume_backward == 2e8
        assert profile.volume_optimizer == 2e8
        assert profile.time_per_step == pytest.approx(2e8 / 1.6e10)

    def test_stage3_schedule(self, model):
        """Test: all stage-3 traffic is per step."""
        profile = build_comm_profile(model, ZeroStage.STAGE_3, make_cluster([0.01]))
        assert profile.volume_forward == 2e8
        assert profile.volume_backward == 4e8
        assert profile.time_per_step == pytest.approx(0.0375)
        assert profile.time_per_iteration == 0.0

    def test_to_dict_uses_plain_stage(self, model):
        """Test: serialized stage is an int."""
        data = build_comm_profile(model, ZeroStage.STAGE_3, make_cluster([0.01])).to_dict()
        assert data["stage"] == 3
        assert type(data["stage"]) is int
