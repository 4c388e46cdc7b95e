"""Accuracy reports: aligned text tables, CSV copies, and bar-chart
figures rendered next to the delimited output."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = [
    "format_accuracy_table",
    "write_accuracy_csv",
    "render_accuracy_figure",
    "render_sweep_figure",
]


def format_accuracy_table(
    title: str,
    row_labels: Sequence[str],
    class_ids: Sequence[int],
    cells: Mapping[str, Mapping[int, float]],
    mean_label: str = "mAP",
) -> str:
    """Per-class percentage table with a trailing mean column, one row
    per model/threshold."""
    headers = [f"class_{c}" for c in class_ids] + [mean_label]
    label_width = max(12, max((len(r) for r in row_labels), default=0) + 2)
    col_width = max(9, max(len(h) for h in headers) + 2)
    lines = [title]
    lines.append("".ljust(label_width) + "".join(h.rjust(col_width) for h in headers))
    for label in row_labels:
        row = cells[label]
        values = [row[c] for c in class_ids]
        mean = sum(values) / len(values)
        rendered = "".join(f"{100.0 * v:.1f}".rjust(col_width) for v in values)
        lines.append(label.ljust(label_width) + rendered + f"{100.0 * mean:.1f}".rjust(col_width))
    return "\n".join(lines) + "\n"


def write_accuracy_csv(
    path: Union[str, Path],
    rows: Sequence[tuple[str, float, int, float]],
) -> None:
    """Machine-readable copy: model,threshold,class,accuracy rows."""
    lines = ["model,threshold,class,accuracy"]
    for model, threshold, class_id, accuracy in rows:
        lines.append(f"{model},{threshold!r},{class_id},{accuracy!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _save(fig, path: Union[str, Path]) -> None:
    fig.savefig(str(path), dpi=110, metadata={"Software": None})
    plt.close(fig)


def render_accuracy_figure(
    path: Union[str, Path],
    class_ids: Sequence[int],
    series: Mapping[str, Mapping[int, float]],
    title: str,
) -> None:
    """Grouped per-class accuracy bars, one group per class, one bar per
    series (model or threshold)."""
    labels = list(series)
    x = range(len(class_ids))
    width = 0.8 / max(1, len(labels))
    fig, ax = plt.subplots(figsize=(1.8 + 1.2 * len(class_ids), 3.6))
    for k, label in enumerate(labels):
        values = [100.0 * series[label][c] for c in class_ids]
        offsets = [xi + (k - (len(labels) - 1) / 2.0) * width for xi in x]
        ax.bar(offsets, values, width=width, label=label)
    ax.set_xticks(list(x))
    ax.set_xticklabels([f"class {c}" for c in class_ids])
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 105)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def render_sweep_figure(
    path: Union[str, Path],
    regimes: Sequence[str],
    means: Sequence[float],
    title: str,
) -> None:
    """Mean accuracy across augmentation regimes."""
    fig, ax = plt.subplots(figsize=(1.6 + 0.7 * len(regimes), 3.6))
    ax.plot(range(len(regimes)), [100.0 * m for m in means], marker="o")
    ax.set_xticks(range(len(regimes)))
    ax.set_xticklabels(regimes, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("mean accuracy (%)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
