"""Report encodings.

Structured reports are JSON with sorted keys and two-space indentation;
tabular reports are CSV. Identical reports always encode to identical
bytes.
"""

import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Union

from core.exceptions import ValidationError
from core.models import OutputFormat, PipelineReport

logger = logging.getLogger(__name__)


def render_json(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def render_csv(rows: Sequence[Dict[str, Any]]) -> str:
    """CSV with the header taken from the first row's keys."""
    buffer = io.StringIO()
    if not rows:
        return ""
    fieldnames: List[str] = list(rows[0].keys())
    for row in rows[1:]:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(v) for k, v in row.items()})
    return buffer.getvalue()


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(str(_cell(v)) for v in value)
    return value


def load_report(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a JSON report written by ``ReportWriter``."""
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ValidationError(f"Cannot read report {path}: {e}", field="plan", value=str(path)) from e
    except json.JSONDecodeError as e:
        raise ValidationError(
            f"Report {path} is not valid JSON: {e.msg}",
            field="plan",
            value=str(path),
            line=e.lineno,
        ) from e


class ReportWriter:
    """Writes pipeline reports to a file or a stream."""

    def __init__(self, output_format: OutputFormat = OutputFormat.OBJ):
        self.output_format = OutputFormat(output_format)

    def render(self, report: PipelineReport) -> str:
        if self.output_format is OutputFormat.TABLE:
            return render_csv(report.rows)
        return render_json(report.payload)

    def write(
        self,
        report: PipelineReport,
        out: Optional[Union[str, Path]] = None,
        stream: Optional[TextIO] = None
    ) -> List[Path]:
        """Write ``report``; extra tables go next to ``out`` as ``<stem>.<name>.csv``.

        Returns:
            Paths written (empty when writing to a stream)
        """
        text = self.render(report)
        if out is None:
            (stream or sys.stdout).write(text)
            return []

        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        written = [path]
        if self.output_format is OutputFormat.TABLE:
            for name, rows in sorted(report.tables.items()):
                sibling = path.with_name(f"{path.stem}.{name}.csv")
                sibling.write_text(render_csv(rows), encoding="utf-8")
                written.append(sibling)
        logger.info("Wrote %s report to %s", report.command, ", ".join(str(p) for p in written))
        return written
