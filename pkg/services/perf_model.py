"""Per-device performance curves built from profiling samples.

A curve maps batch size to speed (batches per second) through a natural
cubic spline over the points (b, b / step_time). It exposes the peak
speed, the integer range of batch sizes running within ``peak_tolerance``
of that peak, and the inverse query used by the planner's time sweep.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import ValidationError
from core.models import DeviceProfile, ProfileResult, Sample
from core.numerics import CubicSpline, eval_spline, fit_natural_spline

PEAK_TOLERANCE = 0.05
SPEED_FLOOR = 1e-9


@dataclass(frozen=True)
class PerfCurve:
    """Speed curve of one device over batch sizes 1..mbs."""
    device_id: int
    mbs: int
    speed_spline: Optional[CubicSpline]
    constant_speed: Optional[float]
    peak_speed: float
    peak_range: Tuple[int, int]
    step_time_table: Tuple[float, ...]
    speed_floor: float = SPEED_FLOOR

    @classmethod
    def constant(cls, device_id: int, speed: float, mbs: int) -> 'PerfCurve':
        """Curve with the same speed at every batch size."""
        if speed <= 0:
            raise ValidationError("Speed must be positive", field="speed", value=speed)
        if mbs < 1:
            raise ValidationError("mbs must be at least 1", field="mbs", value=mbs)
        batches = np.arange(1, mbs + 1, dtype=float)
        return cls(
            device_id=device_id,
            mbs=mbs,
            speed_spline=None,
            constant_speed=float(speed),
            peak_speed=float(speed),
            peak_range=(1, mbs),
            step_time_table=tuple(float(t) for t in batches / speed),
        )

    def speed(self, batch_size: float) -> float:
        """Batches per second, clamped to the speed floor."""
        if self.speed_spline is None:
            return float(self.constant_speed)
        return max(float(eval_spline(self.speed_spline, batch_size)), self.speed_floor)

    def speeds(self) -> np.ndarray:
        """Speeds at every integer batch size 1..mbs."""
        batches = np.arange(1, self.mbs + 1, dtype=float)
        if self.speed_spline is None:
            return np.full(self.mbs, float(self.constant_speed))
        return np.maximum(eval_spline(self.speed_spline, batches), self.speed_floor)

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "mbs": self.mbs,
            "peak_speed": self.peak_speed,
            "peak_range": list(self.peak_range),
            "knots": list(self.speed_spline.knots) if self.speed_spline else [],
        }

    def table_rows(self) -> list:
        """One row per integer batch size, for plotting."""
        return [
            {
                "device_id": self.device_id,
                "batch_size": b,
                "speed": float(s),
                "step_time": self.step_time_table[b - 1],
            }
            for b, s in enumerate(self.speeds(), start=1)
        ]


def _peak_range(speeds: np.ndarray, peak_tolerance: float) -> Tuple[float, Tuple[int, int]]:
    best = int(np.argmax(speeds))
    peak = float(speeds[best])
    threshold = (1.0 - peak_tolerance) * peak
    lo = hi = best
    while lo > 0 and speeds[lo - 1] >= threshold:
        lo -= 1
    while hi < len(speeds) - 1 and speeds[hi + 1] >= threshold:
        hi += 1
    return peak, (lo + 1, hi + 1)


def build_curve(
    samples: Sequence[Sample],
    mbs: int,
    device_id: int = 0,
    peak_tolerance: float = PEAK_TOLERANCE,
    speed_floor: float = SPEED_FLOOR
) -> PerfCurve:
    """Fit the speed curve of one device.

    A single sample yields a constant curve. The peak range is the
    contiguous run of batch sizes around the fastest one whose speed stays
    within ``peak_tolerance`` of the peak.

    Raises:
        ValidationError: no samples, batch outside [1, mbs] or non-positive time
    """
    if not samples:
        raise ValidationError("No profiling samples", field="samples", value=0)
    if mbs < 1:
        raise ValidationError("mbs must be at least 1", field="mbs", value=mbs)
    for batch_size, seconds in samples:
        if not 1 <= batch_size <= mbs:
            raise ValidationError("Sample batch outside [1, mbs]", field="samples", value=batch_size)
        if seconds <= 0:
            raise ValidationError("Sample time must be positive", field="samples", value=seconds)

    if len(samples) == 1:
        batch_size, seconds = samples[0]
        return PerfCurve.constant(device_id, batch_size / seconds, mbs)

    spline = fit_natural_spline((b, b / t) for b, t in samples)
    batches = np.arange(1, mbs + 1, dtype=float)
    speeds = np.maximum(eval_spline(spline, batches), speed_floor)
    peak, peak_range = _peak_range(speeds, peak_tolerance)
    return PerfCurve(
        device_id=device_id,
        mbs=mbs,
        speed_spline=spline,
        constant_speed=None,
        peak_speed=peak,
        peak_range=peak_range,
        step_time_table=tuple(float(t) for t in batches / speeds),
        speed_floor=speed_floor,
    )


def curve_from_profile(
    device: DeviceProfile,
    peak_tolerance: float = PEAK_TOLERANCE,
    speed_floor: float = SPEED_FLOOR
) -> PerfCurve:
    return build_curve(device.samples, device.mbs, device.device_id, peak_tolerance, speed_floor)


def curves_from_profile(
    profile: ProfileResult,
    peak_tolerance: float = PEAK_TOLERANCE,
    speed_floor: float = SPEED_FLOOR
) -> Tuple[PerfCurve, ...]:
    return tuple(curve_from_profile(d, peak_tolerance, speed_floor) for d in profile.devices)


def predict_step_time(curve: PerfCurve, batch_size: int) -> float:
    """Seconds for one step of ``batch_size`` on this device.

    Raises:
        ValidationError: batch size outside [1, mbs]
    """
    if not 1 <= batch_size <= curve.mbs:
        raise ValidationError(
            f"Batch size must be within [1, {curve.mbs}]",
            field="batch_size",
            value=batch_size,
        )
    return curve.step_time_table[batch_size - 1]


def suffix_min_times(curve: PerfCurve) -> np.ndarray:
    """Minimum predicted time over batch sizes b..mbs, for every b.

    Non-decreasing in b, so the largest b with time(b) ≤ t is the number of
    entries ≤ t.
    """
    return np.minimum.accumulate(np.asarray(curve.step_time_table)[::-1])[::-1]


def find_max_batch_within_time(curve: PerfCurve, t: float) -> int:
    """Largest b in [0, mbs] with predict_step_time(b) ≤ t; 0 sits out."""
    if t < 0:
        raise ValidationError("Time must be non-negative", field="t", value=t)
    return int(np.searchsorted(suffix_min_times(curve), t, side="right"))


def curve_fit_error(curve: PerfCurve, true_step_time: Callable[[int], float]) -> float:
    """Maximum relative step-time error against a reference over 1..mbs."""
    worst = 0.0
    for batch_size in range(1, curve.mbs + 1):
        expected = true_step_time(batch_size)
        predicted = curve.step_time_table[batch_size - 1]
        worst = max(worst, abs(predicted - expected) / expected)
    return worst
