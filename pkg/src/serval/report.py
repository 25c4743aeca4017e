"""Result reporting: JSON, aligned text tables, TSV, and bar-chart figures.

Tables render values x100 with one decimal (half-up), one table per metric,
rows keyed by (vlm, encoder) and columns by dataset plus an unweighted AVG.
The JSON payload keeps full float precision. The figure mirrors the table:
one subplot per metric, one bar group per dataset column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import DatasetEval, macro_average


@dataclass(frozen=True)
class RunRecord:
    """One evaluated (vlm, encoder, dataset) cell."""

    vlm: str
    encoder: str
    dataset: str
    metrics: Mapping[str, float]


def metric_sort_key(name: str) -> tuple[str, int]:
    """Order metrics by family then cutoff: ndcg@1, ndcg@5, ndcg@10, ..."""
    prefix, _, cutoff = name.partition("@")
    try:
        return (prefix, int(cutoff))
    except ValueError:
        return (prefix, 0)


@dataclass
class EvalReport:
    """All datasets evaluated for one run tag, plus the macro average."""

    datasets: dict[str, DatasetEval] = field(default_factory=dict)

    def macro(self) -> dict[str, float]:
        names: set[str] = set()
        for ev in self.datasets.values():
            names.update(ev.means)
        return {
            name: macro_average(
                {ds: ev.means[name] for ds, ev in self.datasets.items() if name in ev.means}
            )
            for name in sorted(names)
        }

    def to_json_payload(self) -> dict:
        return {
            "datasets": {
                ds: {**ev.means, "skipped_queries": ev.skipped_queries}
                for ds, ev in self.datasets.items()
            },
            "macro": self.macro(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_payload(), indent=2, sort_keys=True) + "\n"


def format_cell(value: float | None) -> str:
    """Render a metric value x100 to one decimal, half-up; missing as '-'."""
    if value is None:
        return "-"
    return str(Decimal(repr(value * 100)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def records_from_reports(reports: Mapping[str, EvalReport]) -> list[RunRecord]:
    """Flatten tagged reports into records; tags split as '<vlm>+<encoder>'."""
    records = []
    for tag, report in reports.items():
        vlm, _, encoder = tag.partition("+")
        for ds, ev in report.datasets.items():
            records.append(RunRecord(vlm=vlm, encoder=encoder, dataset=ds, metrics=ev.means))
    return records


def render_tables(records: list[RunRecord]) -> dict[str, str]:
    """One aligned text table per metric name found in the records."""
    metric_names = sorted({name for rec in records for name in rec.metrics}, key=metric_sort_key)
    datasets = sorted({rec.dataset for rec in records})
    rows = sorted({(rec.vlm, rec.encoder) for rec in records})
    by_key = {(rec.vlm, rec.encoder, rec.dataset): rec.metrics for rec in records}

    tables: dict[str, str] = {}
    for metric in metric_names:
        header = ["VLM", "Text Encoder", *datasets, "AVG"]
        body: list[list[str]] = []
        for vlm, encoder in rows:
            cells: list[str] = [vlm, encoder]
            present: dict[str, float] = {}
            for ds in datasets:
                metrics = by_key.get((vlm, encoder, ds))
                value = metrics.get(metric) if metrics else None
                if value is not None:
                    present[ds] = value
                cells.append(format_cell(value))
            cells.append(format_cell(macro_average(present) if present else None))
            body.append(cells)
        tables[metric] = _align([header, *body], title=f"Metric: {metric}")
    return tables


def write_tsv(records: list[RunRecord], path: str | Path) -> None:
    """Long-format delimited output: vlm, encoder, dataset, metric, value."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("vlm\tencoder\tdataset\tmetric\tvalue\n")
        for rec in sorted(records, key=lambda r: (r.vlm, r.encoder, r.dataset)):
            for metric in sorted(rec.metrics, key=metric_sort_key):
                fh.write(
                    f"{rec.vlm}\t{rec.encoder}\t{rec.dataset}\t{metric}\t{repr(rec.metrics[metric])}\n"
                )


def write_figure(records: list[RunRecord], path: str | Path) -> None:
    """Bar chart per metric: datasets (plus AVG) on x, one bar per run pair."""
    metric_names = sorted({name for rec in records for name in rec.metrics}, key=metric_sort_key)
    datasets = sorted({rec.dataset for rec in records})
    rows = sorted({(rec.vlm, rec.encoder) for rec in records})
    by_key = {(rec.vlm, rec.encoder, rec.dataset): rec.metrics for rec in records}
    if not metric_names or not rows:
        raise ValueError("nothing to plot")

    columns = [*datasets, "AVG"]
    fig, axes = plt.subplots(
        len(metric_names), 1, figsize=(max(6.0, 1.8 * len(columns)), 2.6 * len(metric_names)),
        squeeze=False,
    )
    width = 0.8 / len(rows)
    for ax, metric in zip(axes[:, 0], metric_names):
        for j, (vlm, encoder) in enumerate(rows):
            values = []
            present: dict[str, float] = {}
            for ds in datasets:
                metrics = by_key.get((vlm, encoder, ds))
                value = metrics.get(metric) if metrics else None
                if value is not None:
                    present[ds] = value
                values.append(100.0 * value if value is not None else 0.0)
            values.append(100.0 * macro_average(present) if present else 0.0)
            offsets = [i + (j - (len(rows) - 1) / 2) * width for i in range(len(columns))]
            label = f"{vlm}+{encoder}" if encoder else vlm
            ax.bar(offsets, values, width=width, label=label)
        ax.set_xticks(range(len(columns)))
        ax.set_xticklabels(columns, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel(metric)
        ax.set_ylim(0, 100)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _align(rows: list[list[str]], title: str = "") -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    if title:
        lines.append(title)
    for idx, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
