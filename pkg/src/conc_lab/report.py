"""Consolidate run summaries into markdown and CSV tables."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .models import RunSummary
from .store import format_float, load_summary

logger = logging.getLogger(__name__)

REPORT_HEADER = ["run", "command", "check", "passed", "measured", "threshold"]


@dataclass
class ReportRow:
    run: str
    command: str
    check: str
    passed: bool
    measured: float | None = None
    threshold: float | None = None


@dataclass
class Report:
    rows: list[ReportRow] = field(default_factory=list)

    @property
    def failed(self) -> list[ReportRow]:
        return [row for row in self.rows if not row.passed]

    @property
    def passed(self) -> bool:
        return not self.failed

    def by_check(self) -> dict[str, list[ReportRow]]:
        groups: dict[str, list[ReportRow]] = defaultdict(list)
        for row in self.rows:
            groups[row.check].append(row)
        return dict(sorted(groups.items()))


def summary_rows(run: str, summary: RunSummary) -> list[ReportRow]:
    if summary.status == "error":
        return [ReportRow(run, summary.command, "error", False)]
    return [
        ReportRow(run, summary.command, c.name, c.passed, c.measured, c.threshold)
        for c in summary.checks
    ]


def build_report(run_dirs: list[str | Path]) -> Report:
    """Collect every check of every run; missing summaries raise InputMissing."""
    report = Report()
    for run_dir in run_dirs:
        summary = load_summary(run_dir)
        report.rows.extend(summary_rows(str(run_dir), summary))
    logger.info(f"Report: {len(run_dirs)} runs, {len(report.rows)} checks, {len(report.failed)} failing")
    return report


def _number(value: float | None) -> str:
    return "" if value is None else format_float(value)


def render_markdown(report: Report) -> str:
    lines = ["# conc-lab report", ""]
    if not report.rows:
        lines.append("No runs.")
        return "\n".join(lines) + "\n"

    lines.append(f"{len(report.rows) - len(report.failed)} of {len(report.rows)} checks pass.")
    for check, rows in report.by_check().items():
        lines += ["", f"## {check}", "", "| run | command | result | measured | threshold |", "|---|---|---|---|---|"]
        for row in rows:
            result = "pass" if row.passed else "**FAIL**"
            lines.append(
                f"| {row.run} | {row.command} | {result} | {_number(row.measured)} | {_number(row.threshold)} |"
            )
    return "\n".join(lines) + "\n"


def csv_rows(report: Report) -> list[list]:
    return [
        [row.run, row.command, row.check, row.passed, row.measured, row.threshold]
        for row in report.rows
    ]
