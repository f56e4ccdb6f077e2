"""Experiment spec documents.

Spec files are YAML (JSON is accepted as a subset). The document is
validated against pydantic schema models and converted to the frozen
domain records in ``core.models``. Validation errors name the offending
field with its dotted path and the line it sits on.
"""

import dataclasses
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as SchemaError

from core.config import Settings, get_settings
from core.exceptions import ValidationError
from core.models import (
    ClusterGroundTruth,
    DeviceGroundTruth,
    ExperimentSpec,
    ModelSpec,
    OutputFormat,
    StageRequest,
    estimate_param_count,
    parse_stage_request,
)

logger = logging.getLogger(__name__)


class DeviceSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "gpu"
    total_mem: float = Field(gt=0)
    act_mem_per_batch: float = Field(gt=0)
    compute_fixed: float = Field(ge=0)
    compute_per_batch: float = Field(gt=0)
    optimizer_time: float = Field(default=0.0, ge=0)
    rated_tflops: Optional[float] = Field(default=None, gt=0)
    link_bandwidth: Optional[float] = Field(default=None, gt=0)
    count: int = Field(default=1, ge=1)


class ClusterSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    devices: List[DeviceSchema] = Field(min_length=1)
    link_bandwidths: Optional[List[float]] = None
    link_bandwidth: Optional[float] = Field(default=None, gt=0)
    link_latency: float = Field(default=0.0, ge=0)
    jitter: float = Field(default=0.0, ge=0, le=0.5)


class ModelSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    param_count: Optional[int] = Field(default=None, gt=0)
    hidden_size: int = Field(gt=0)
    num_layers: int = Field(gt=0)
    bytes_per_param: int = Field(default=2, gt=0)
    optimizer_state_multiplier: int = Field(default=16, gt=0)
    param_state_bytes: int = Field(default=2, ge=0)
    grad_state_bytes: int = Field(default=2, ge=0)
    flops_per_batch: Optional[float] = Field(default=None, gt=0)


class SpecSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cluster: ClusterSchema
    model: ModelSchema
    gbs: int = Field(ge=1)
    stage: Union[int, str] = "auto"
    iterations: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)
    format: OutputFormat = OutputFormat.OBJ


def _field_path(loc: Sequence[Union[str, int]]) -> str:
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path


def _line_of(root: Optional[yaml.Node], loc: Sequence[Union[str, int]]) -> Optional[int]:
    """1-based line of the deepest node reachable along ``loc``."""
    if root is None:
        return None
    node = root
    line = node.start_mark.line + 1
    for part in loc:
        child = None
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                if key.value == str(part):
                    child = value
                    line = key.start_mark.line + 1
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int):
            if 0 <= part < len(node.value):
                child = node.value[part]
                line = child.start_mark.line + 1
        if child is None:
            break
        node = child
    return line


def _first_schema_error(error: SchemaError, root: Optional[yaml.Node]) -> ValidationError:
    detail = error.errors()[0]
    loc = [part for part in detail["loc"] if not (isinstance(part, str) and part.startswith("function-"))]
    field = _field_path(loc)
    line = _line_of(root, loc)
    where = f" (line {line})" if line is not None else ""
    return ValidationError(
        f"Invalid spec field '{field}'{where}: {detail['msg']}",
        field=field,
        value=detail.get("input"),
        line=line,
    )


def _bandwidths(cluster: ClusterSchema, devices: List[DeviceSchema]) -> Tuple[float, ...]:
    expanded: List[Optional[float]] = []
    for device in devices:
        expanded.extend([device.link_bandwidth] * device.count)
    if cluster.link_bandwidths is not None:
        if len(cluster.link_bandwidths) != len(expanded):
            raise ValidationError(
                "cluster.link_bandwidths needs one entry per device",
                field="cluster.link_bandwidths",
                value=len(cluster.link_bandwidths),
            )
        if any(bw <= 0 for bw in cluster.link_bandwidths):
            raise ValidationError(
                "Link bandwidths must be positive",
                field="cluster.link_bandwidths",
            )
        return tuple(float(bw) for bw in cluster.link_bandwidths)
    resolved = []
    for i, bw in enumerate(expanded):
        bw = bw if bw is not None else cluster.link_bandwidth
        if bw is None:
            raise ValidationError(
                f"No link bandwidth for device {i}",
                field="cluster.link_bandwidth",
            )
        resolved.append(float(bw))
    return tuple(resolved)


def _build(schema: SpecSchema, settings: Settings) -> ExperimentSpec:
    seed = settings.default_seed if schema.seed is None else schema.seed
    iterations = settings.default_iterations if schema.iterations is None else schema.iterations
    devices = []
    for entry in schema.cluster.devices:
        for k in range(entry.count):
            name = entry.name if entry.count == 1 else f"{entry.name}-{k}"
            devices.append(DeviceGroundTruth(
                id=len(devices),
                name=name,
                total_mem=entry.total_mem,
                act_mem_per_batch=entry.act_mem_per_batch,
                compute_fixed=entry.compute_fixed,
                compute_per_batch=entry.compute_per_batch,
                optimizer_time=entry.optimizer_time,
                rated_tflops=entry.rated_tflops,
            ))
    cluster = ClusterGroundTruth(
        devices=tuple(devices),
        link_bandwidths=_bandwidths(schema.cluster, schema.cluster.devices),
        link_latency=schema.cluster.link_latency,
        seed=seed,
        jitter=schema.cluster.jitter,
    )

    m = schema.model
    model = ModelSpec(
        param_count=m.param_count if m.param_count is not None else estimate_param_count(m.hidden_size, m.num_layers),
        hidden_size=m.hidden_size,
        num_layers=m.num_layers,
        bytes_per_param=m.bytes_per_param,
        optimizer_state_multiplier=m.optimizer_state_multiplier,
        param_state_bytes=m.param_state_bytes,
        grad_state_bytes=m.grad_state_bytes,
        flops_per_batch=m.flops_per_batch,
    )
    if model.optimizer_state_bytes < 0:
        raise ValidationError(
            "optimizer_state_multiplier must cover param and grad state bytes",
            field="model.optimizer_state_multiplier",
            value=m.optimizer_state_multiplier,
        )

    try:
        stage = parse_stage_request(schema.stage)
    except ValueError as e:
        raise ValidationError(
            f"Invalid stage '{schema.stage}', expected 0-3 or auto",
            field="stage",
            value=schema.stage,
        ) from e

    return ExperimentSpec(
        cluster=cluster,
        model=model,
        gbs=schema.gbs,
        stage=stage,
        iterations=iterations,
        seed=seed,
        output_format=schema.format,
    )


def parse_spec(text: str, source: str = "<spec>", settings: Optional[Settings] = None) -> ExperimentSpec:
    """Parse and validate a spec document.

    Missing ``iterations`` and ``seed`` come from ``settings``.

    Raises:
        ValidationError: malformed document or schema violation
    """
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ValidationError(f"Malformed spec document {source}: {e}", field="document", line=line) from e
    if not isinstance(data, dict):
        raise ValidationError(f"Spec document {source} must be a mapping", field="document")

    try:
        schema = SpecSchema.model_validate(data)
    except SchemaError as e:
        raise _first_schema_error(e, root) from e
    spec = _build(schema, settings or get_settings())
    logger.info(
        "Loaded spec %s: %d devices, gbs=%d, stage=%s",
        source, spec.cluster.size, spec.gbs, spec.stage,
    )
    return spec


def load_spec(path: Union[str, Path], settings: Optional[Settings] = None) -> ExperimentSpec:
    """Read and parse a spec file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ValidationError(f"Cannot read spec file {path}: {e}", field="spec", value=str(path)) from e
    return parse_spec(text, source=str(path), settings=settings)


def spec_to_dict(spec: ExperimentSpec) -> Dict[str, Any]:
    """Expanded document form of ``spec``; devices are always listed one by one."""
    devices = []
    for device in spec.cluster.devices:
        entry: Dict[str, Any] = {
            "name": device.name,
            "total_mem": device.total_mem,
            "act_mem_per_batch": device.act_mem_per_batch,
            "compute_fixed": device.compute_fixed,
            "compute_per_batch": device.compute_per_batch,
            "optimizer_time": device.optimizer_time,
        }
        if device.rated_tflops is not None:
            entry["rated_tflops"] = device.rated_tflops
        devices.append(entry)
    model = spec.model.to_dict()
    if model["flops_per_batch"] is None:
        del model["flops_per_batch"]
    stage = spec.stage if spec.stage == "auto" else int(spec.stage)
    return {
        "cluster": {
            "devices": devices,
            "link_bandwidths": list(spec.cluster.link_bandwidths),
            "link_latency": spec.cluster.link_latency,
            "jitter": spec.cluster.jitter,
        },
        "model": model,
        "gbs": spec.gbs,
        "stage": stage,
        "iterations": spec.iterations,
        "seed": spec.seed,
        "format": spec.output_format.value,
    }


def serialize_spec(spec: ExperimentSpec) -> str:
    """YAML text that parses back to ``spec``."""
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False, default_flow_style=False)


def with_overrides(
    spec: ExperimentSpec,
    gbs: Optional[int] = None,
    stage: Optional[StageRequest] = None,
    iterations: Optional[int] = None,
    seed: Optional[int] = None,
    output_format: Optional[OutputFormat] = None
) -> ExperimentSpec:
    """Apply command-line overrides on top of a parsed spec."""
    changes: Dict[str, Any] = {}
    if gbs is not None:
        if gbs < 1:
            raise ValidationError("gbs must be at least 1", field="gbs", value=gbs)
        changes["gbs"] = gbs
    if stage is not None:
        try:
            changes["stage"] = parse_stage_request(stage)
        except ValueError as e:
            raise ValidationError(f"Invalid stage '{stage}'", field="stage", value=stage) from e
    if iterations is not None:
        if iterations < 1:
            raise ValidationError("iterations must be at least 1", field="iterations", value=iterations)
        changes["iterations"] = iterations
    if seed is not None:
        if seed < 0:
            raise ValidationError("seed must be non-negative", field="seed", value=seed)
        changes["seed"] = seed
        changes["cluster"] = dataclasses.replace(spec.cluster, seed=seed)
    if output_format is not None:
        changes["output_format"] = OutputFormat(output_format)
    return dataclasses.replace(spec, **changes) if changes else spec


class SpecRepository:
    """Loads and stores experiment specs on disk."""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

    def load(self, path: Union[str, Path]) -> ExperimentSpec:
        return load_spec(path, self.settings)

    def parse(self, text: str, source: str = "<spec>") -> ExperimentSpec:
        return parse_spec(text, source, self.settings)

    def from_dict(self, data: Dict[str, Any], source: str = "<request>") -> ExperimentSpec:
        """Validate an already-decoded document (HTTP bodies)."""
        if not isinstance(data, dict):
            raise ValidationError("Spec document must be a mapping", field="document")
        try:
            schema = SpecSchema.model_validate(data)
        except SchemaError as e:
            raise _first_schema_error(e, None) from e
        return _build(schema, self.settings)

    def save(self, spec: ExperimentSpec, path: Union[str, Path]) -> None:
        Path(path).write_text(serialize_spec(spec), encoding="utf-8")
