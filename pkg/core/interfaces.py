"""Service abstractions following Dependency Inversion Principle."""

from abc import ABC, abstractmethod
from typing import Sequence

from core.models import MemoryProbe, ProfileResult, StageRequest, StepTrace, ZeroStage


class IDeviceBackend(ABC):
    """Something the profiler can run training steps on."""

    @abstractmethod
    def device_ids(self) -> Sequence[int]:
        """Identifiers of the devices, in rank order."""
        pass

    @abstractmethod
    def device_name(self, device_id: int) -> str:
        """Human-readable device label."""
        pass

    @abstractmethod
    def memory_probe(self, device_id: int, stage: ZeroStage) -> MemoryProbe:
        """Memory readings around a batch-1 forward pass; raises OutOfMemoryError."""
        pass

    @abstractmethod
    def run_step(self, device_id: int, batch_size: int, stage: ZeroStage) -> StepTrace:
        """Run one training step; raises OutOfMemoryError."""
        pass

    @abstractmethod
    def fingerprint(self) -> str:
        """Stable digest identifying the backend configuration."""
        pass


class IProfiler(ABC):
    """Cluster profiler interface."""

    @abstractmethod
    def profile_cluster(self, backend: IDeviceBackend, stage_request: StageRequest) -> ProfileResult:
        """Profile every device, escalating the stage if needed."""
        pass

    @abstractmethod
    async def aprofile_cluster(
        self, backend: IDeviceBackend, stage_request: StageRequest
    ) -> ProfileResult:
        """Async variant of ``profile_cluster``."""
        pass
