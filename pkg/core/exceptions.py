"""Custom exception hierarchy for the planner.

Provides consistent error handling across all modules. Every error knows
its HTTP status code and the CLI exit code it maps to.
"""

from typing import Any, Dict, Optional


class PlannerError(Exception):
    """Base exception for all planner errors.

    All custom exceptions inherit from this base class so the CLI and the
    HTTP layer can translate them in one place.
    """

    status_code: int = 500
    exit_code: int = 1

    def __init__(
        self,
        message: str,
        status_code: Optional[int] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        """Initialize exception with message and optional metadata.

        Args:
            message: Human-readable error description
            status_code: HTTP status code, overrides the class default
            details: Additional error context
        """
        super().__init__(message)
        self.message = message
        if status_code is not None:
            self.status_code = status_code
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for reports and API responses.

        Returns:
            Dictionary containing error information
        """
        error_dict: Dict[str, Any] = {
            "error": self.__class__.__name__,
            "message": self.message,
            "status_code": self.status_code,
            "exit_code": self.exit_code,
        }
        if self.details:
            error_dict["details"] = self.details
        return error_dict


class ValidationError(PlannerError):
    """Raised when an input (spec document, argument, curve) is invalid.

    Examples:
        - Negative device memory in a spec file
        - Fewer than two points handed to the spline fit
        - Batch size outside [1, mbs] in a prediction
    """

    status_code = 400
    exit_code = 1

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        value: Any = None,
        line: Optional[int] = None
    ):
        """Initialize validation error.

        Args:
            message: Error description
            field: Dotted path of the offending field
            value: Offending value
            line: 1-based line in the source document, when known
        """
        details: Dict[str, Any] = {}
        if field is not None:
            details["field"] = field
        if value is not None:
            details["value"] = repr(value)
        if line is not None:
            details["line"] = line
        super().__init__(message, details=details)
        self.field = field
        self.value = value
        self.line = line


class InstanceTooLargeError(ValidationError):
    """Raised when a brute-force oracle instance exceeds its size guard."""


class ConfigurationError(PlannerError):
    """Raised when settings are invalid or inconsistent."""

    status_code = 500
    exit_code = 1

    def __init__(self, message: str, config_key: Optional[str] = None):
        details = {"config_key": config_key} if config_key else {}
        super().__init__(message, details=details)


class OutOfMemoryError(PlannerError):
    """Signals that a step does not fit in device memory.

    Mirrors a caught accelerator out-of-memory error: the profiler treats
    it as a recoverable probe outcome, the simulator as a plan defect.
    """

    status_code = 422
    exit_code = 2

    def __init__(
        self,
        device_id: int,
        batch_size: int,
        required_bytes: float,
        total_bytes: float
    ):
        super().__init__(
            f"Device {device_id} out of memory at batch size {batch_size}",
            details={
                "device_id": device_id,
                "batch_size": batch_size,
                "required_bytes": required_bytes,
                "total_bytes": total_bytes,
            },
        )
        self.device_id = device_id
        self.batch_size = batch_size


class ModelTooLargeError(PlannerError):
    """Raised when no ZeRO stage fits batch size 1 on every device."""

    status_code = 409
    exit_code = 2


class InfeasiblePlanError(PlannerError):
    """Raised when no allocation can serve the requested global batch.

    Examples:
        - No sweep point yields a positive micro batch
        - All devices report a maximum batch size of zero
    """

    status_code = 422
    exit_code = 2


class InternalInconsistencyError(PlannerError):
    """Raised when derived quantities contradict each other."""

    status_code = 500
    exit_code = 2


class CheckFailedError(PlannerError):
    """Raised when the check suite finds a tolerance breach."""

    status_code = 422
    exit_code = 3

    def __init__(self, message: str, failures: Optional[list] = None):
        super().__init__(message, details={"failures": failures or []})
        self.failures = failures or []
