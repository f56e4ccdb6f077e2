"""
Planner Domain Models

Latent hardware description, profiling output, plans and simulation
reports. Every record serializes to plain dicts for reports.
"""

from dataclasses import asdict, dataclass, field
from enum import Enum, IntEnum
from typing import Any, Dict, List, Optional, Tuple, Union


class ZeroStage(IntEnum):
    """ZeRO sharding stage."""
    STAGE_0 = 0
    STAGE_1 = 1
    STAGE_2 = 2
    STAGE_3 = 3

    @property
    def synchronizes_per_step(self) -> bool:
        """Stages 2/3 communicate inside every micro-step."""
        return self >= ZeroStage.STAGE_2


AUTO_STAGE = "auto"
StageRequest = Union[ZeroStage, str]


def parse_stage_request(value: Union[int, str, ZeroStage]) -> StageRequest:
    """Normalize ``0..3`` or ``"auto"`` into a stage request."""
    if isinstance(value, str):
        if value.strip().lower() == AUTO_STAGE:
            return AUTO_STAGE
        value = int(value)
    return ZeroStage(int(value))


class OutputFormat(str, Enum):
    """Report output formats."""
    OBJ = "obj"
    TABLE = "table"


class PlanStrategy(str, Enum):
    """How an allocation plan was produced."""
    ZERO01 = "zero01"
    ZERO23 = "zero23"
    UNIFORM = "uniform"
    RATED_CAPACITY = "rated_capacity"


@dataclass(frozen=True)
class DeviceGroundTruth:
    """Latent per-device characteristics (never visible to the planner)."""
    id: int
    name: str
    total_mem: float
    act_mem_per_batch: float
    compute_fixed: float
    compute_per_batch: float
    optimizer_time: float = 0.0
    rated_tflops: Optional[float] = None

    def compute_time(self, batch_size: int) -> float:
        """Latent forward+backward seconds for one step."""
        return self.compute_fixed + self.compute_per_batch * batch_size


@dataclass(frozen=True)
class ClusterGroundTruth:
    """Latent cluster: devices plus the interconnect."""
    devices: Tuple[DeviceGroundTruth, ...]
    link_bandwidths: Tuple[float, ...]
    link_latency: float = 0.0
    seed: int = 0
    jitter: float = 0.0

    @property
    def size(self) -> int:
        return len(self.devices)

    def device(self, device_id: int) -> DeviceGroundTruth:
        return self.devices[device_id]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "devices": [asdict(d) for d in self.devices],
            "link_bandwidths": list(self.link_bandwidths),
            "link_latency": self.link_latency,
            "seed": self.seed,
            "jitter": self.jitter,
        }


def estimate_param_count(hidden_size: int, num_layers: int) -> int:
    """Transformer parameter count approximation, 12·d·h²."""
    return 12 * num_layers * hidden_size * hidden_size


@dataclass(frozen=True)
class ModelSpec:
    """Model description used for memory and communication accounting."""
    param_count: int
    hidden_size: int
    num_layers: int
    bytes_per_param: int = 2
    optimizer_state_multiplier: int = 16
    param_state_bytes: int = 2
    grad_state_bytes: int = 2
    flops_per_batch: Optional[float] = None

    @property
    def optimizer_state_bytes(self) -> int:
        return self.optimizer_state_multiplier - self.param_state_bytes - self.grad_state_bytes

    @property
    def batch_flops(self) -> float:
        if self.flops_per_batch is not None:
            return self.flops_per_batch
        return 6.0 * self.param_count

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class StepTrace:
    """Timing of one simulated training step, in seconds."""
    forward_compute: float
    backward_compute: float
    optimizer_step: float
    allreduce: float = 0.0
    forward_allgather: float = 0.0
    backward_allgather: float = 0.0
    reduce_scatter: float = 0.0
    param_allgather: float = 0.0

    @property
    def compute(self) -> float:
        return self.forward_compute + self.backward_compute

    @property
    def elapsed(self) -> float:
        """Wall time of the full step including every collective."""
        return (
            self.forward_compute + self.backward_compute + self.optimizer_step
            + self.allreduce + self.forward_allgather + self.backward_allgather
            + self.reduce_scatter + self.param_allgather
        )


@dataclass(frozen=True)
class MemoryProbe:
    """Memory readings of one batch-1 step."""
    before_forward: float
    after_forward: float
    total: float


@dataclass(frozen=True)
class CommProfile:
    """Collective volumes (bytes) and times (seconds) for one stage."""
    stage: ZeroStage
    volume_forward: float
    volume_backward: float
    volume_optimizer: float
    time_per_step: float
    time_per_iteration: float

    @property
    def volume_total(self) -> float:
        return self.volume_forward + self.volume_backward + self.volume_optimizer

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["stage"] = int(self.stage)
        return data


Sample = Tuple[int, float]


@dataclass(frozen=True)
class DeviceProfile:
    """Profiling outcome for one device."""
    device_id: int
    name: str
    mbs: int
    mbs_estimate: int
    samples: Tuple[Sample, ...]
    probes: int
    optimizer_seconds: float = 0.0
    profiling_seconds: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "device_id": self.device_id,
            "name": self.name,
            "mbs": self.mbs,
            "mbs_estimate": self.mbs_estimate,
            "samples": [[b, t] for b, t in self.samples],
            "probes": self.probes,
            "optimizer_seconds": self.optimizer_seconds,
            "profiling_seconds": self.profiling_seconds,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DeviceProfile':
        return cls(
            device_id=int(data["device_id"]),
            name=str(data["name"]),
            mbs=int(data["mbs"]),
            mbs_estimate=int(data["mbs_estimate"]),
            samples=tuple((int(b), float(t)) for b, t in data["samples"]),
            probes=int(data["probes"]),
            optimizer_seconds=float(data.get("optimizer_seconds", 0.0)),
            profiling_seconds=float(data.get("profiling_seconds", 0.0)),
        )


@dataclass(frozen=True)
class ProfileResult:
    """Profiling outcome for the whole cluster."""
    stage_requested: StageRequest
    effective_stage: ZeroStage
    devices: Tuple[DeviceProfile, ...]
    escalations: Tuple[int, ...] = ()

    @property
    def probes_used(self) -> int:
        return sum(d.probes for d in self.devices)

    @property
    def profiling_seconds(self) -> float:
        """Devices probe in parallel, so overhead is the slowest device."""
        return max((d.profiling_seconds for d in self.devices), default=0.0)

    @property
    def mbs(self) -> List[int]:
        return [d.mbs for d in self.devices]

    def to_dict(self) -> Dict[str, Any]:
        requested = self.stage_requested
        return {
            "stage_requested": requested if isinstance(requested, str) else int(requested),
            "effective_stage": int(self.effective_stage),
            "escalations": list(self.escalations),
            "probes_used": self.probes_used,
            "profiling_seconds": self.profiling_seconds,
            "devices": [d.to_dict() for d in self.devices],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ProfileResult':
        return cls(
            stage_requested=parse_stage_request(data["stage_requested"]),
            effective_stage=ZeroStage(int(data["effective_stage"])),
            devices=tuple(DeviceProfile.from_dict(d) for d in data["devices"]),
            escalations=tuple(int(s) for s in data.get("escalations", [])),
        )


@dataclass(frozen=True)
class PlanMetrics:
    """Completion time, idle time, under-utilization and objective."""
    T: float
    idle: Tuple[float, ...]
    under_utilization: Tuple[float, ...]
    objective: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "T": self.T,
            "idle": list(self.idle),
            "under_utilization": list(self.under_utilization),
            "objective": self.objective,
        }


@dataclass(frozen=True)
class DeviceAssignment:
    """Batches assigned to one device for one iteration.

    The device runs ``micro_batch`` on steps 1..gas-1, ``last_batch`` on
    step ``gas`` and nothing afterwards.
    """
    device_id: int
    micro_batch: int
    total_batch: int
    last_batch: int
    accumulation_steps: int
    predicted_finish: float = 0.0

    def step_batches(self, steps: int) -> List[int]:
        """Batch processed on each of ``steps`` synchronized micro-steps."""
        schedule = [0] * steps
        for k in range(min(self.accumulation_steps, steps)):
            schedule[k] = self.micro_batch
        if self.accumulation_steps >= 1:
            schedule[self.accumulation_steps - 1] = self.last_batch
        return schedule

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DeviceAssignment':
        return cls(
            device_id=int(data["device_id"]),
            micro_batch=int(data["micro_batch"]),
            total_batch=int(data["total_batch"]),
            last_batch=int(data["last_batch"]),
            accumulation_steps=int(data["accumulation_steps"]),
            predicted_finish=float(data.get("predicted_finish", 0.0)),
        )


@dataclass(frozen=True)
class AllocationPlan:
    """Per-device batch allocation for one training iteration."""
    strategy: PlanStrategy
    stage: ZeroStage
    gbs: int
    assignments: Tuple[DeviceAssignment, ...]
    gas: int
    metrics: PlanMetrics
    predicted_wall_time: float
    sweep_time: Optional[float] = None
    peak_speeds: Tuple[float, ...] = ()

    @property
    def predicted_T(self) -> float:
        return self.metrics.T

    @property
    def objective(self) -> float:
        return self.metrics.objective

    @property
    def micro_batches(self) -> List[int]:
        return [a.micro_batch for a in self.assignments]

    @property
    def total_batches(self) -> List[int]:
        return [a.total_batch for a in self.assignments]

    @property
    def last_batches(self) -> List[int]:
        return [a.last_batch for a in self.assignments]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "strategy": self.strategy.value,
            "stage": int(self.stage),
            "gbs": self.gbs,
            "gas": self.gas,
            "assignments": [a.to_dict() for a in self.assignments],
            "metrics": self.metrics.to_dict(),
            "predicted_wall_time": self.predicted_wall_time,
            "sweep_time": self.sweep_time,
            "peak_speeds": list(self.peak_speeds),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'AllocationPlan':
        metrics = data["metrics"]
        return cls(
            strategy=PlanStrategy(data["strategy"]),
            stage=ZeroStage(int(data["stage"])),
            gbs=int(data["gbs"]),
            assignments=tuple(DeviceAssignment.from_dict(a) for a in data["assignments"]),
            gas=int(data["gas"]),
            metrics=PlanMetrics(
                T=float(metrics["T"]),
                idle=tuple(float(x) for x in metrics["idle"]),
                under_utilization=tuple(float(x) for x in metrics["under_utilization"]),
                objective=float(metrics["objective"]),
            ),
            predicted_wall_time=float(data["predicted_wall_time"]),
            sweep_time=data.get("sweep_time"),
            peak_speeds=tuple(float(p) for p in data.get("peak_speeds", ())),
        )


@dataclass(frozen=True)
class SegmentReport:
    """One synchronized segment of an iteration."""
    label: str
    busy: Tuple[float, ...]
    T: float

    def to_dict(self) -> Dict[str, Any]:
        return {"label": self.label, "busy": list(self.busy), "T": self.T}


@dataclass(frozen=True)
class IterationReport:
    """Outcome of one simulated iteration."""
    busy: Tuple[float, ...]
    idle: Tuple[float, ...]
    T: float
    comm_total: float
    throughput: float
    flops_proxy: float
    processed_batches: int
    segments: Tuple[SegmentReport, ...] = ()
    under_utilization: Tuple[float, ...] = ()
    objective: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "busy": list(self.busy),
            "idle": list(self.idle),
            "T": self.T,
            "comm_total": self.comm_total,
            "throughput": self.throughput,
            "flops_proxy": self.flops_proxy,
            "processed_batches": self.processed_batches,
            "segments": [s.to_dict() for s in self.segments],
            "under_utilization": list(self.under_utilization),
            "objective": self.objective,
        }


@dataclass(frozen=True)
class SimReport:
    """Averaged outcome of a simulated run."""
    strategy: str
    iterations: int
    mean: IterationReport
    throughput_std: float = 0.0
    speedup_vs_baseline: Optional[float] = None
    baseline: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "strategy": self.strategy,
            "iterations": self.iterations,
            "mean": self.mean.to_dict(),
            "throughput_std": self.throughput_std,
            "speedup_vs_baseline": self.speedup_vs_baseline,
            "baseline": self.baseline,
        }


@dataclass(frozen=True)
class OracleResult:
    """Exhaustive-search optimum for a small instance."""
    assignment: Tuple[int, ...]
    value: float
    enumerated: int
    objective_assignment: Tuple[int, ...] = ()
    objective: Optional[float] = None
    gas: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "assignment": list(self.assignment),
            "value": self.value,
            "enumerated": self.enumerated,
            "objective_assignment": list(self.objective_assignment),
            "objective": self.objective,
            "gas": self.gas,
        }


@dataclass(frozen=True)
class ExperimentSpec:
    """A complete experiment: cluster, model and run parameters."""
    cluster: ClusterGroundTruth
    model: ModelSpec
    gbs: int
    stage: StageRequest = AUTO_STAGE
    iterations: int = 50
    seed: int = 0
    output_format: OutputFormat = OutputFormat.OBJ


@dataclass(frozen=True)
class PipelineReport:
    """Output of one pipeline command.

    ``payload`` is the structured report; ``rows`` is its tabular view and
    ``tables`` holds extra named tables (the plan's per-batch curves).
    """
    command: str
    payload: Dict[str, Any]
    rows: Tuple[Dict[str, Any], ...] = ()
    tables: Dict[str, Tuple[Dict[str, Any], ...]] = field(default_factory=dict)
