"""Accuracy report output."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Union

import structlog

from ..errors import RuntimeFailure
from ..models import AccuracyReport

logger = structlog.get_logger(__name__)

CSV_COLUMNS = ["strategy", "entropy_method", "scaler", "params", "repeat", "accuracy"]


def report_to_json(report: AccuracyReport) -> str:
    return json.dumps(report.model_dump(mode="json"), indent=2) + "\n"


def report_to_csv(report: AccuracyReport) -> str:
    """One row per strategy and repeat."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        scaler = row.scaler["kind"] if row.scaler else ""
        method = row.entropy_method.value if row.entropy_method else ""
        for repeat, accuracy in enumerate(row.per_repeat):
            writer.writerow([row.strategy.value, method, scaler, row.params, repeat, f"{accuracy:.6f}"])
    return buffer.getvalue()


def format_summary(report: AccuracyReport) -> str:
    """Human-readable table of mean and standard deviation per row."""
    width = max([len("strategy")] + [len(row.label) for row in report.rows])
    lines = [
        f"dataset={report.dataset} kind={report.kind.value} k={report.k} repeats={report.repeats}",
        f"{'strategy':<{width}}  {'mean':>7}  {'std':>7}  {'valid':>7}  {'invalid':>7}",
    ]
    for row in report.rows:
        lines.append(
            f"{row.label:<{width}}  {row.mean:>7.4f}  {row.std:>7.4f}  {row.valid:>7d}  {row.invalid:>7d}"
        )
    return "\n".join(lines) + "\n"


def write_report(report: AccuracyReport, path: Union[str, Path]) -> None:
    """Write ``report`` as CSV when the path ends in ``.csv``, JSON otherwise."""
    path = Path(path)
    content = report_to_csv(report) if path.suffix.lower() == ".csv" else report_to_json(report)
    try:
        path.write_text(content, encoding="utf-8")
    except OSError as e:
        raise RuntimeFailure(f"Failed to write report {path}: {e}") from e
    logger.info("Report written", path=str(path), rows=len(report.rows))
