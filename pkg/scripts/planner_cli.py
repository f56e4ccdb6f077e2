"""
ZeRO Batch Planner - Command Line Pipeline

profile | plan | simulate | compare | check over a cluster spec file.
Reports go to stdout or --out; logs go to stderr.

Exit codes: 0 ok, 1 validation error, 2 infeasible / model too large /
simulated OOM, 3 check failure.
"""

import asyncio
import functools
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional

import click

# Add parent directory to path to allow imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.config import Settings, get_settings
from core.exceptions import CheckFailedError, PlannerError, ValidationError
from core.logging_config import configure_logging
from core.models import AllocationPlan, ExperimentSpec, OutputFormat, PipelineReport
from repositories.report_repository import ReportWriter, load_report, render_json
from repositories.spec_repository import load_spec, with_overrides
from services.pipeline_service import create_pipeline_service

logger = logging.getLogger("planner_cli")

STAGE_CHOICES = ["0", "1", "2", "3", "auto"]


def spec_options(func: Callable) -> Callable:
    """Flags shared by every command."""
    options = [
        click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False),
                     help="Cluster/model spec (YAML or JSON)"),
        click.option("--gbs", type=int, default=None, help="Global batch size override"),
        click.option("--stage", type=click.Choice(STAGE_CHOICES), default=None,
                     help="ZeRO stage override"),
        click.option("--iterations", type=int, default=None, help="Simulated iterations override"),
        click.option("--seed", type=int, default=None, help="Seed override"),
        click.option("--out", type=click.Path(dir_okay=False), default=None,
                     help="Report path (stdout when omitted)"),
        click.option("--format", "output_format", type=click.Choice([f.value for f in OutputFormat]),
                     default=None, help="obj (JSON) or table (CSV)"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _load(spec_path: str, settings: Settings, **overrides: Any) -> ExperimentSpec:
    return with_overrides(load_spec(spec_path, settings), **overrides)


def _fail(ctx: click.Context, exc: PlannerError) -> None:
    logger.error("%s: %s", exc.__class__.__name__, exc.message)
    click.echo(render_json(exc.to_dict()), err=True, nl=False)
    ctx.exit(exc.exit_code)


def run_pipeline(
    settings: Settings,
    command: str,
    spec: ExperimentSpec,
    out: Optional[str] = None,
    **kwargs: Any
) -> PipelineReport:
    """Run one command, write its report and enforce the check verdict.

    Raises:
        PlannerError: carries the process exit code
    """
    service = create_pipeline_service(settings)
    report: PipelineReport = asyncio.run(service.run(command, spec, **kwargs))
    ReportWriter(spec.output_format).write(report, out)
    if command == "check" and not report.payload["passed"]:
        failures = [row["failures"] for row in report.payload["rows"] if not row["passed"]]
        spec_check = report.payload.get("spec_cluster")
        if spec_check and not spec_check["passed"]:
            failures.append(spec_check["failures"])
        raise CheckFailedError(f"{len(failures)} checks outside tolerance", failures)
    return report


def pipeline_command(command: str) -> Callable:
    """Run ``command`` on the loaded spec and write its report.

    The wrapped function may return keyword arguments for the service call.
    """
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(
            ctx: click.Context,
            spec_path: str,
            gbs: Optional[int],
            stage: Optional[str],
            iterations: Optional[int],
            seed: Optional[int],
            out: Optional[str],
            output_format: Optional[str],
            **kwargs: Any
        ) -> None:
            settings: Settings = ctx.obj
            try:
                spec = _load(
                    spec_path,
                    settings,
                    gbs=gbs, stage=stage, iterations=iterations, seed=seed,
                    output_format=output_format,
                )
                extra = func(spec, **kwargs) or {}
                run_pipeline(settings, command, spec, out, **extra)
            except PlannerError as exc:
                _fail(ctx, exc)
        return wrapper
    return decorator


@click.group()
@click.option("--debug", is_flag=True, help="Verbose logging")
@click.pass_context
def cli(ctx: click.Context, debug: bool) -> None:
    """Heterogeneity-aware ZeRO batch planner."""
    settings = get_settings()
    if debug:
        settings = settings.model_copy(update={"debug": True})
    configure_logging(settings)
    ctx.obj = settings


@cli.command()
@spec_options
@click.pass_context
@pipeline_command("profile")
def profile(spec: ExperimentSpec) -> None:
    """Find every device's maximum batch size and step-time samples."""


@cli.command()
@spec_options
@click.pass_context
@pipeline_command("plan")
def plan(spec: ExperimentSpec) -> None:
    """Profile, fit curves and emit the allocation plan."""


@cli.command()
@spec_options
@click.option("--plan", "plan_path", type=click.Path(dir_okay=False), default=None,
              help="Plan report from a previous 'plan' run")
@click.pass_context
@pipeline_command("simulate")
def simulate(spec: ExperimentSpec, plan_path: Optional[str]) -> dict:
    """Simulate the plan and the uniform baseline."""
    if plan_path is None:
        return {}
    data = load_report(plan_path)
    try:
        return {"plan": AllocationPlan.from_dict(data.get("plan", data))}
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"Not a plan report: {plan_path}", field="plan", value=plan_path) from e


@cli.command()
@spec_options
@click.pass_context
@pipeline_command("compare")
def compare(spec: ExperimentSpec) -> None:
    """Speedup of the planner over the baselines."""


@cli.command()
@spec_options
@click.option("--instances", type=int, default=None, help="Random oracle instances")
@click.pass_context
@pipeline_command("check")
def check(spec: ExperimentSpec, instances: Optional[int]) -> dict:
    """Oracle proximity and prediction fidelity checks."""
    return {"instances": instances}


if __name__ == "__main__":
    cli()
