"""Evaluation: confusion matrices, accuracy, per-class precision/recall/F1,
micro/macro/weighted F1, and the random and majority baselines.

Conventions: a class with a zero denominator scores 0 for the affected
metric (it is not dropped); macro F1 averages over classes that appear in
the gold data, with an opt-in flag to include absent ones; weighted F1
weights per-class F1 by gold-class frequency.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class ConfusionMatrix:
    """Counts[gold][predicted] with the class names alongside."""

    counts: np.ndarray  # [K, K] int64
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.labels = tuple(self.labels)
        k = len(self.labels)
        if self.counts.shape != (k, k):
            raise ValueError(f"counts shape {self.counts.shape} does not match {k} labels")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)


@dataclass
class EvalReport:
    """Everything the shared evaluation protocol reports for one run."""

    accuracy: float
    precision: np.ndarray  # [K]
    recall: np.ndarray  # [K]
    f1: np.ndarray  # [K]
    micro_f1: float
    macro_f1: float
    weighted_f1: float
    confusion: ConfusionMatrix

    def as_lines(self) -> list[str]:
        """Tab-separated key/value lines, stable order."""
        lines = [
            f"accuracy\t{self.accuracy:.6f}",
            f"f1_micro\t{self.micro_f1:.6f}",
            f"f1_macro\t{self.macro_f1:.6f}",
            f"f1_weighted\t{self.weighted_f1:.6f}",
        ]
        for i, name in enumerate(self.confusion.labels):
            lines.append(
                f"class\t{name}\tprecision\t{self.precision[i]:.6f}"
                f"\trecall\t{self.recall[i]:.6f}\tf1\t{self.f1[i]:.6f}"
            )
        return lines


def confusion(gold: Sequence[int], pred: Sequence[int], labels: Sequence[str]) -> ConfusionMatrix:
    """Tally gold/pred index pairs into a confusion matrix."""
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if len(gold) != len(pred):
        raise ValueError(f"gold and pred lengths differ: {len(gold)} vs {len(pred)}")
    if len(gold) < 1:
        raise ValueError("cannot build a confusion matrix from no examples")
    k = len(labels)
    if gold.min() < 0 or gold.max() >= k or pred.min() < 0 or pred.max() >= k:
        raise ValueError(f"label index outside 0..{k - 1}")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (gold, pred), 1)
    return ConfusionMatrix(counts=counts, labels=tuple(labels))


def report(cm: ConfusionMatrix, include_absent_in_macro: bool = False) -> EvalReport:
    """Compute the full metric suite from a confusion matrix.

    Micro F1 comes from global TP/FP/FN counts (for single-label data it
    equals accuracy). ``include_absent_in_macro`` also averages the zero F1
    of classes that never occur in the gold data.
    """
    if cm.total < 1:
        raise ValueError("empty confusion matrix")
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    colsum = counts.sum(axis=0)
    rowsum = counts.sum(axis=1)
    precision = np.divide(tp, colsum, out=np.zeros_like(tp), where=colsum > 0)
    recall = np.divide(tp, rowsum, out=np.zeros_like(tp), where=rowsum > 0)
    pr = precision + recall
    f1 = np.divide(2.0 * precision * recall, pr, out=np.zeros_like(tp), where=pr > 0)

    accuracy = float(tp.sum() / counts.sum())
    present = rowsum > 0
    if include_absent_in_macro or present.all():
        macro_f1 = float(f1.mean())
    else:
        macro_f1 = float(f1[present].mean())
    weighted_f1 = float((f1 * rowsum).sum() / rowsum.sum())

    global_tp = tp.sum()
    global_fp = (colsum - tp).sum()
    global_fn = (rowsum - tp).sum()
    micro_p = global_tp / (global_tp + global_fp) if global_tp + global_fp > 0 else 0.0
    micro_r = global_tp / (global_tp + global_fn) if global_tp + global_fn > 0 else 0.0
    micro_f1 = 2.0 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r > 0 else 0.0

    return EvalReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        micro_f1=float(micro_f1),
        macro_f1=macro_f1,
        weighted_f1=weighted_f1,
        confusion=cm,
    )


def majority_baseline(
    train_labels: Sequence[int], test_gold: Sequence[int], labels: Sequence[str]
) -> EvalReport:
    """Predict the most frequent training label (ties to the lowest index)
    for every test item."""
    train_labels = np.asarray(train_labels, dtype=np.int64)
    test_gold = np.asarray(test_gold, dtype=np.int64)
    if len(train_labels) < 1 or len(test_gold) < 1:
        raise ValueError("majority baseline needs non-empty train labels and test gold")
    majority = int(np.argmax(np.bincount(train_labels, minlength=len(labels))))
    pred = np.full(len(test_gold), majority, dtype=np.int64)
    return report(confusion(test_gold, pred, labels))


def random_baseline(
    num_classes: int, test_gold: Sequence[int], seed: int, labels: Sequence[str] | None = None
) -> EvalReport:
    """Predict a uniform random label per test item under ``seed``."""
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    test_gold = np.asarray(test_gold, dtype=np.int64)
    if labels is None:
        labels = tuple(f"class_{i}" for i in range(num_classes))
    pred = np.random.default_rng(seed).integers(0, num_classes, size=len(test_gold))
    return report(confusion(test_gold, pred, labels))


def _cells(cm: ConfusionMatrix, normalize: bool) -> np.ndarray:
    if not normalize:
        return cm.counts
    rowsum = cm.counts.sum(axis=1, keepdims=True).astype(np.float64)
    return np.divide(cm.counts, rowsum, out=np.zeros_like(cm.counts, dtype=np.float64), where=rowsum > 0)


def render_confusion(cm: ConfusionMatrix, normalize: bool = False) -> tuple[str, str]:
    """Render (aligned text table, CSV) views of a confusion matrix.

    Rows are gold classes, columns predicted. Normalized mode divides each
    row by its sum; rows with no gold examples render as zeros. The CSV has
    a quoted header row and column of label names.
    """
    cells = _cells(cm, normalize)
    fmt = (lambda v: f"{v:.4f}") if normalize else (lambda v: str(int(v)))
    names = list(cm.labels)
    width = max(len(n) for n in names + ["gold\\pred"])
    col_widths = [max(len(names[j]), *(len(fmt(cells[i, j])) for i in range(len(names)))) for j in range(len(names))]
    lines = ["gold\\pred".ljust(width) + "  " + "  ".join(n.rjust(col_widths[j]) for j, n in enumerate(names))]
    for i, name in enumerate(names):
        row = "  ".join(fmt(cells[i, j]).rjust(col_widths[j]) for j in range(len(names)))
        lines.append(name.ljust(width) + "  " + row)
    table = "\n".join(lines) + "\n"

    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
    writer.writerow(["gold\\pred"] + names)
    for i, name in enumerate(names):
        writer.writerow([name] + [float(c) if normalize else int(c) for c in cells[i]])
    return table, buf.getvalue()


def parse_confusion_csv(text: str) -> ConfusionMatrix:
    """Inverse of the count-mode CSV rendering."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "gold\\pred":
        raise ValueError("not a confusion-matrix CSV")
    names = rows[0][1:]
    counts = np.zeros((len(names), len(names)), dtype=np.int64)
    for i, row in enumerate(rows[1:]):
        if row[0] != names[i]:
            raise ValueError(f"row label {row[0]!r} does not match column order")
        counts[i] = [int(float(v)) for v in row[1:]]
    return ConfusionMatrix(counts=counts, labels=tuple(names))
