"""Confusion matrices, macro-averaged metrics, and cross-section aggregation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np


@dataclass(eq=False)
class ConfusionMatrix:
    """Integer count matrix; rows are true classes, columns predictions."""

    counts: np.ndarray          # (C, C) int64
    classes: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        c = len(self.classes)
        if counts.shape != (c, c):
            raise ValueError(f"counts shape {counts.shape} does not match {c} classes")
        if np.any(counts < 0):
            raise ValueError("confusion counts must be non-negative")
        self.counts = counts

    @property
    def total(self) -> int:
        return int(self.counts.sum())


class MacroMetrics(NamedTuple):
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float


@dataclass
class SectionResult:
    """Metrics of one evaluated section."""

    section_id: int
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: ConfusionMatrix | None = None
    test_signer: str = ""
    val_signer: str = ""

    def __post_init__(self):
        for name, value in self.metric_values().items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    def metric_values(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }


METRIC_NAMES = ("accuracy", "macro_precision", "macro_recall", "macro_f1")


@dataclass
class RunReport:
    """Per-section results plus mean/std aggregates across sections."""

    sections: list[SectionResult]
    aggregate: dict[str, dict[str, float]]
    config: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)


def confusion(
    true_labels: Sequence[str],
    predicted_labels: Sequence[str],
    vocabulary: Sequence[str],
) -> ConfusionMatrix:
    """Count (true, predicted) label pairs over a fixed class vocabulary."""
    if len(true_labels) != len(predicted_labels):
        raise ValueError(
            f"label lists differ in length: {len(true_labels)} vs {len(predicted_labels)}"
        )
    classes = tuple(vocabulary)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if t not in index:
            raise ValueError(f"true label {t!r} not in vocabulary")
        if p not in index:
            raise ValueError(f"predicted label {p!r} not in vocabulary")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(counts=counts, classes=classes)


def normalize_rows(m: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Divide each row by its sum.

    Returns the normalized matrix and a boolean mask of all-zero rows
    (classes absent from the fold); those rows stay zero.
    """
    counts = m.counts.astype(np.float64)
    row_sums = counts.sum(axis=1)
    absent = row_sums == 0
    safe = np.where(absent, 1.0, row_sums)
    return counts / safe[:, None], absent


def macro_metrics(m: ConfusionMatrix) -> MacroMetrics:
    """Accuracy plus macro precision/recall/F1 over classes present in the fold.

    Per-class values with a zero denominator are defined as 0; classes with
    no true samples are excluded from the macro averages.
    """
    counts = m.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise ValueError("cannot compute metrics of an empty confusion matrix")
    tp = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, tp / np.where(col > 0, col, 1.0), 0.0)
        recall = np.where(row > 0, tp / np.where(row > 0, row, 1.0), 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    present = row > 0
    return MacroMetrics(
        accuracy=float(tp.sum() / total),
        macro_precision=float(precision[present].mean()),
        macro_recall=float(recall[present].mean()),
        macro_f1=float(f1[present].mean()),
    )


def aggregate(
    results: Sequence[SectionResult],
    config: dict | None = None,
    timing: dict | None = None,
) -> RunReport:
    """Mean and population standard deviation of each metric across sections.

    Sections are ordered by id first, so merging results in any order yields
    a bit-identical report.
    """
    if not results:
        raise ValueError("cannot aggregate zero section results")
    results = sorted(results, key=lambda r: r.section_id)
    agg: dict[str, dict[str, float]] = {}
    for name in METRIC_NAMES:
        values = np.array([r.metric_values()[name] for r in results], dtype=np.float64)
        agg[name] = {"mean": float(values.mean()), "std": float(values.std())}
    return RunReport(
        sections=list(results),
        aggregate=agg,
        config=dict(config or {}),
        timing=dict(timing or {}),
    )


def format_mean_std(mean: float, std: float) -> str:
    """Presentation form used in result tables, e.g. '0.93 ± 0.05'."""
    return f"{mean:.2f} ± {std:.2f}"


def report_to_dict(report: RunReport) -> dict:
    return {
        "format": "report-v1",
        "config": report.config,
        "sections": [
            {
                "section_id": r.section_id,
                "test": r.test_signer,
                "val": r.val_signer,
                **{k: v for k, v in r.metric_values().items()},
            }
            for r in sorted(report.sections, key=lambda r: r.section_id)
        ],
        "aggregate": report.aggregate,
        "timing": report.timing,
    }


def write_report_json(report: RunReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), sort_keys=True, indent=1) + "\n")


def write_report_csv(report: RunReport, path: str | Path) -> None:
    lines = ["section_id,test,val," + ",".join(METRIC_NAMES)]
    for r in sorted(report.sections, key=lambda r: r.section_id):
        vals = r.metric_values()
        lines.append(
            f"{r.section_id},{r.test_signer},{r.val_signer},"
            + ",".join(f"{vals[name]:.6f}" for name in METRIC_NAMES)
        )
    summary = ",".join(
        format_mean_std(report.aggregate[name]["mean"], report.aggregate[name]["std"])
        for name in METRIC_NAMES
    )
    lines.append(f"aggregate,,,{summary}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_confusion_csv(m: ConfusionMatrix, path: str | Path) -> None:
    lines = ["true\\pred," + ",".join(m.classes)]
    for cls, row in zip(m.classes, m.counts):
        lines.append(cls + "," + ",".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def save_confusion_heatmap(m: ConfusionMatrix, path: str | Path) -> None:
    """Row-normalized heatmap PNG. Requires matplotlib (optional extra)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    normalized, _ = normalize_rows(m)
    n = len(m.classes)
    fig, ax = plt.subplots(figsize=(max(4, n * 0.45), max(3.5, n * 0.4)))
    im = ax.imshow(normalized, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(n), m.classes, rotation=90, fontsize=7)
    ax.set_yticks(range(n), m.classes, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(n):
        for j in range(n):
            if normalized[i, j] > 0:
                ax.text(
                    j, i, f"{normalized[i, j]:.2f}",
                    ha="center", va="center", fontsize=6,
                    color="white" if normalized[i, j] > 0.6 else "black",
                )
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
