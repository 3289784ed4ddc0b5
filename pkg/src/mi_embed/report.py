"""Experiment reports: per-repeat metrics, aggregates, and renderers.

Reports render deterministically: the structured form is canonical JSON
(sorted keys, repr floats) that parses back to an equal report; the table
form prints percentages to two decimals as "mean +- std" with "n/a" for
undefined metrics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import CheckpointError
from .metrics import MetricValues

REPORT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CellResult:
    """One experiment cell (a table row) aggregated over repeats."""

    cell: str
    per_repeat: tuple[MetricValues, ...]
    mean: MetricValues
    std: MetricValues


@dataclass(frozen=True)
class MetricsReport:
    experiment: str
    seeds: tuple[int, ...]
    config: dict[str, str]
    cells: tuple[CellResult, ...]
    errors: tuple[str, ...] = ()


def _aggregate(values: list[float | None]) -> tuple[float | None, float | None]:
    defined = [v for v in values if v is not None]
    if not defined:
        return None, None
    arr = np.array(defined, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def aggregate_cell(cell: str, per_repeat) -> CellResult:
    """Mean and standard deviation over repeats, skipping undefined values."""
    per_repeat = tuple(per_repeat)
    means = []
    stds = []
    for metric in ("accuracy", "precision", "recall"):
        mean, std = _aggregate([getattr(m, metric) for m in per_repeat])
        means.append(mean)
        stds.append(std)
    return CellResult(cell, per_repeat, MetricValues(*means), MetricValues(*stds))


def _metric_doc(m: MetricValues) -> dict:
    return {"accuracy": m.accuracy, "precision": m.precision, "recall": m.recall}


def _metric_from_doc(doc: dict) -> MetricValues:
    return MetricValues(doc["accuracy"], doc["precision"], doc["recall"])


def render_json(report: MetricsReport) -> str:
    doc = {
        "format_version": REPORT_FORMAT_VERSION,
        "experiment": report.experiment,
        "seeds": list(report.seeds),
        "config": dict(report.config),
        "errors": list(report.errors),
        "cells": [
            {
                "cell": c.cell,
                "per_repeat": [_metric_doc(m) for m in c.per_repeat],
                "mean": _metric_doc(c.mean),
                "std": _metric_doc(c.std),
            }
            for c in report.cells
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_json(text: str) -> MetricsReport:
    doc = json.loads(text)
    try:
        if doc["format_version"] != REPORT_FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported report format_version {doc['format_version']}"
            )
        cells = tuple(
            CellResult(
                cell=c["cell"],
                per_repeat=tuple(_metric_from_doc(m) for m in c["per_repeat"]),
                mean=_metric_from_doc(c["mean"]),
                std=_metric_from_doc(c["std"]),
            )
            for c in doc["cells"]
        )
        return MetricsReport(
            experiment=doc["experiment"],
            seeds=tuple(doc["seeds"]),
            config=dict(doc["config"]),
            cells=cells,
            errors=tuple(doc["errors"]),
        )
    except KeyError as exc:
        raise CheckpointError(f"report missing field {exc}") from exc


def _fmt(mean: float | None, std: float | None) -> str:
    if mean is None:
        return "n/a"
    if std is None:
        return f"{mean:.2f}"
    return f"{mean:.2f} +- {std:.2f}"


def render_table(report: MetricsReport) -> str:
    """Human-readable summary table, two decimals, paper-style columns."""
    lines = [
        f"experiment: {report.experiment}",
        f"seeds: {', '.join(str(s) for s in report.seeds)}",
        f"repeats: {len(report.seeds)}",
    ]
    if report.errors:
        lines.append(f"aborted repeats: {len(report.errors)}")
        for err in report.errors:
            lines.append(f"  ! {err}")
    header = f"{'cell':<22} {'accuracy':>18} {'precision':>18} {'recall':>18}"
    lines.append("")
    lines.append(header)
    lines.append("-" * len(header))
    for c in report.cells:
        lines.append(
            f"{c.cell:<22} "
            f"{_fmt(c.mean.accuracy, c.std.accuracy):>18} "
            f"{_fmt(c.mean.precision, c.std.precision):>18} "
            f"{_fmt(c.mean.recall, c.std.recall):>18}"
        )
    lines.append("")
    lines.append("config:")
    for key in sorted(report.config):
        lines.append(f"  {key} = {report.config[key]}")
    return "\n".join(lines) + "\n"


def render(report: MetricsReport, fmt: str = "json") -> str:
    if fmt == "json":
        return render_json(report)
    if fmt == "table":
        return render_table(report)
    raise CheckpointError(f"unknown report format {fmt!r}")
