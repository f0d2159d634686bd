"""Render run results as markdown and CSV tables.

The ``format_eval`` layout mirrors the per-modality format comparison: one
row per (modality, model, format) with paired columns for raw and
normalized balanced accuracy, best value per modality flagged. The
``fusion`` layout pivots run labels against tasks; ``severity`` does the
same with MAE. CSV cells carry full float precision and re-parse exactly.
"""

from __future__ import annotations

import io
from typing import Sequence

from ..errors import ValidationError
from .run import RunResult

LAYOUTS = ("format_eval", "fusion", "severity")


def _test_metric(result: RunResult, name: str) -> float:
    report = result.reports.get("test")
    if report is None:
        raise ValidationError(f"run {result.label or result.config_digest[:8]} has no test report")
    value = getattr(report, name)
    if value is None:
        raise ValidationError(f"run {result.label or result.config_digest[:8]} has no {name}")
    return value


def _format_eval_rows(results: Sequence[RunResult]) -> list[dict]:
    cells: dict[tuple[str, str, str], dict[bool, float]] = {}
    for r in results:
        meta = r.row_meta
        if "modality" not in meta:
            raise ValidationError("format_eval layout needs single-modality runs")
        key = (meta["modality"], meta["model"], meta["format"])
        cells.setdefault(key, {})[bool(meta["normalize"])] = _test_metric(r, "balanced_accuracy")
    best_per_modality: dict[str, float] = {}
    for (modality, _, _), pair in cells.items():
        for v in pair.values():
            best_per_modality[modality] = max(best_per_modality.get(modality, -1.0), v)
    rows = []
    for (modality, model, fmt), pair in sorted(cells.items()):
        rows.append({
            "modality": modality,
            "model": model,
            "format": fmt,
            "ba": pair.get(False),
            "ba_norm": pair.get(True),
            "best": best_per_modality[modality],
        })
    return rows


def _bold(value: float | None, best: float) -> str:
    if value is None:
        return "-"
    text = f"{100 * value:.1f}"
    return f"**{text}**" if value == best else text


def report_tables(results: Sequence[RunResult], layout: str = "format_eval") -> tuple[str, str]:
    """Markdown and CSV renderings of a set of runs sharing a task family."""
    if layout not in LAYOUTS:
        raise ValidationError(f"unknown layout {layout!r} (choose from {LAYOUTS})")
    if not results:
        raise ValidationError("no results to report")

    md = io.StringIO()
    csv = io.StringIO()

    if layout == "format_eval":
        tasks = {r.task for r in results}
        if len(tasks) != 1:
            raise ValidationError(f"format_eval layout needs a single task, got {sorted(tasks)}")
        rows = _format_eval_rows(results)
        md.write("| Modality | Format | Model | BA | BA (w/ norm) |\n")
        md.write("|---|---|---|---|---|\n")
        csv.write("modality,format,model,ba,ba_norm\n")
        for row in rows:
            md.write(
                f"| {row['modality']} | {row['format']} | {row['model']} "
                f"| {_bold(row['ba'], row['best'])} | {_bold(row['ba_norm'], row['best'])} |\n"
            )
            ba = "" if row["ba"] is None else repr(row["ba"])
            ban = "" if row["ba_norm"] is None else repr(row["ba_norm"])
            csv.write(f"{row['modality']},{row['format']},{row['model']},{ba},{ban}\n")
        return md.getvalue(), csv.getvalue()

    metric = "balanced_accuracy" if layout == "fusion" else "mae"
    tasks = sorted({r.task for r in results})
    labels = []
    cells: dict[tuple[str, str], float] = {}
    for r in results:
        label = r.label or r.row_meta.get("fusion", "run")
        if label not in labels:
            labels.append(label)
        cells[(label, r.task)] = _test_metric(r, metric)
    best = {}
    for task in tasks:
        values = [cells[(l, task)] for l in labels if (l, task) in cells]
        best[task] = max(values) if metric == "balanced_accuracy" else min(values)
    md.write("| Run | " + " | ".join(tasks) + " |\n")
    md.write("|---|" + "---|" * len(tasks) + "\n")
    csv.write("run," + ",".join(tasks) + "\n")
    for label in labels:
        md_cells, csv_cells = [], []
        for task in tasks:
            value = cells.get((label, task))
            if value is None:
                md_cells.append("-")
                csv_cells.append("")
            elif metric == "mae":
                text = f"{value:.2f}"
                md_cells.append(f"**{text}**" if value == best[task] else text)
                csv_cells.append(repr(value))
            else:
                md_cells.append(_bold(value, best[task]))
                csv_cells.append(repr(value))
        md.write(f"| {label} | " + " | ".join(md_cells) + " |\n")
        csv.write(f"{label}," + ",".join(csv_cells) + "\n")
    return md.getvalue(), csv.getvalue()
