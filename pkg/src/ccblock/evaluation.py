"""Confusion matrices, one-vs-rest counts, and the derived metric tables.

Conventions, fixed for determinism and table arithmetic:
  - class order is (covid, pneumonia, normal), truncated for 2-class;
  - the positive class for sensitivity/specificity is covid (index 0),
    one-vs-rest in both tasks;
  - accuracy is overall multiclass accuracy (diagonal / total);
  - argmax ties resolve to the lowest class index;
  - percentages are rounded half-up to 2 decimals at presentation only.
"""

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .data import class_names
from .layers import softmax_xent


def round2(x: float):
    """Half-up rounding of a float's shortest decimal form to 2 places."""
    if x is None:
        return None
    return float(Decimal(repr(float(x))).quantize(Decimal("0.01"),
                                                  rounding=ROUND_HALF_UP))


def predict_classes(probs: np.ndarray) -> np.ndarray:
    """Argmax per row; exact ties go to the lowest class index."""
    return probs.argmax(axis=1)


def confusion_matrix(true_labels, predicted_labels, k: int) -> np.ndarray:
    """K x K counts, rows = true class, columns = predicted class."""
    true_labels = np.asarray(true_labels)
    predicted_labels = np.asarray(predicted_labels)
    if true_labels.shape != predicted_labels.shape or true_labels.ndim != 1:
        raise ValueError(
            f"label lists must be equal-length vectors, got "
            f"{true_labels.shape} and {predicted_labels.shape}"
        )
    for name, labels in (("true", true_labels), ("predicted", predicted_labels)):
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValueError(f"{name} labels must lie in [0, {k})")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (true_labels, predicted_labels), 1)
    return cm


@dataclass(frozen=True)
class BinaryCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def one_vs_rest(cm: np.ndarray, positive: int) -> BinaryCounts:
    """Collapse a multiclass confusion matrix for one positive class."""
    k = cm.shape[0]
    if not 0 <= positive < k:
        raise ValueError(f"positive class {positive} out of range [0, {k})")
    tp = int(cm[positive, positive])
    fn = int(cm[positive].sum()) - tp
    fp = int(cm[:, positive].sum()) - tp
    tn = int(cm.sum()) - tp - fn - fp
    return BinaryCounts(tp, tn, fp, fn)


@dataclass(frozen=True)
class MetricSet:
    """Percentages; None marks an undefined ratio (zero denominator)."""

    sensitivity: float | None
    specificity: float | None
    accuracy: float | None

    def rounded(self) -> "MetricSet":
        return MetricSet(round2(self.sensitivity), round2(self.specificity),
                         round2(self.accuracy))


def _ratio(num: int, den: int):
    return 100.0 * num / den if den > 0 else None


def metrics(counts: BinaryCounts, multiclass_correct: int = None,
            total: int = None) -> MetricSet:
    """sensitivity = TP/(TP+FN), specificity = TN/(TN+FP), accuracy =
    correct/total (defaults to (TP+TN)/counts.total for the binary task).

    Raw ratios are kept; round with .rounded() for presentation.
    """
    if multiclass_correct is not None:
        if total is None:
            raise ValueError("total is required with multiclass_correct")
        accuracy = _ratio(multiclass_correct, total)
    else:
        accuracy = _ratio(counts.tp + counts.tn, counts.total)
    return MetricSet(
        sensitivity=_ratio(counts.tp, counts.tp + counts.fn),
        specificity=_ratio(counts.tn, counts.tn + counts.fp),
        accuracy=accuracy,
    )


def per_class_accuracy(cm: np.ndarray):
    """Diagonal rate per class; None where a class has no samples."""
    out = []
    for i in range(cm.shape[0]):
        row_sum = int(cm[i].sum())
        out.append(_ratio(int(cm[i, i]), row_sum))
    return out


@dataclass(frozen=True)
class RunSet:
    runs: tuple
    average: MetricSet


def _mean_or_none(values):
    if any(v is None for v in values):
        return None
    return float(np.mean(values))


def average_runs(runs) -> RunSet:
    """Unweighted arithmetic mean per metric over runs."""
    runs = tuple(runs)
    if not runs:
        raise ValueError("average_runs needs at least one run")
    return RunSet(
        runs=runs,
        average=MetricSet(
            _mean_or_none([r.sensitivity for r in runs]),
            _mean_or_none([r.specificity for r in runs]),
            _mean_or_none([r.accuracy for r in runs]),
        ),
    )


@dataclass
class RunResult:
    """One evaluation pass: confusion matrix plus covid one-vs-rest metrics."""

    name: str
    cm: np.ndarray
    counts: BinaryCounts
    metric_set: MetricSet
    loss: float | None = None


def evaluate_run(model, dataset, name: str = "Run1",
                 batch_size: int = 32) -> RunResult:
    """Predict a dataset in inference mode and summarize it."""
    k = model.num_classes
    total_loss = 0.0
    predictions = []
    n = len(dataset)
    for start in range(0, n, batch_size):
        x, y = dataset.fetch(np.arange(start, min(start + batch_size, n)))
        logits = model.forward_logits(x, train=False)
        loss, probs = softmax_xent(logits, y)
        total_loss += loss * len(y)
        predictions.append(predict_classes(probs))
    cm = confusion_matrix(dataset.labels, np.concatenate(predictions), k)
    return summarize_cm(cm, name=name, loss=total_loss / n)


def summarize_cm(cm: np.ndarray, name: str = "Run1",
                 loss: float = None) -> RunResult:
    counts = one_vs_rest(cm, positive=0)
    mset = metrics(counts, multiclass_correct=int(np.trace(cm)),
                   total=int(cm.sum()))
    return RunResult(name, cm, counts, mset, loss)


def _fmt(value) -> str:
    return "-" if value is None else f"{round2(value):.2f}"


def metric_grid_rows(results) -> list:
    """(name, sensitivity, specificity, accuracy) strings, runs + average."""
    run_set = average_runs([r.metric_set for r in results])
    rows = [
        (r.name, _fmt(r.metric_set.sensitivity), _fmt(r.metric_set.specificity),
         _fmt(r.metric_set.accuracy))
        for r in results
    ]
    avg = run_set.average
    rows.append(("average", _fmt(avg.sensitivity), _fmt(avg.specificity),
                 _fmt(avg.accuracy)))
    return rows


def cm_to_csv(cm: np.ndarray, num_classes: int) -> str:
    """Confusion matrix as a CSV grid (rows true, columns predicted)."""
    names = class_names(num_classes)
    lines = ["true\\predicted," + ",".join(names)]
    for i, row in enumerate(cm):
        lines.append(names[i] + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def render_report(results, fmt: str = "text") -> str:
    """Per-run confusion matrices plus the runs-by-metrics grid with an
    average row; text, csv, and json-lines renderings carry identical
    numbers."""
    results = list(results)
    num_classes = results[0].cm.shape[0]
    grid = metric_grid_rows(results)
    if fmt == "text":
        lines = []
        header = ("", "Sensitivity", "Specificity", "Accuracy")
        table = [header] + grid
        widths = [max(len(row[i]) for row in table) for i in range(4)]
        for row in table:
            lines.append("  ".join(cell.rjust(widths[i])
                                   for i, cell in enumerate(row)).rstrip())
        names = class_names(num_classes)
        for r in results:
            lines.append("")
            lines.append(f"{r.name} confusion matrix "
                         f"(rows true, columns predicted; {', '.join(names)}):")
            for row in r.cm:
                lines.append("  " + " ".join(f"{int(v):6d}" for v in row))
            lines.append(f"  covid one-vs-rest: TP={r.counts.tp} TN={r.counts.tn} "
                         f"FP={r.counts.fp} FN={r.counts.fn}")
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        lines = ["run,sensitivity,specificity,accuracy"]
        lines += [",".join(row) for row in grid]
        return "\n".join(lines) + "\n"
    if fmt == "json-lines":
        lines = []
        for r, row in zip(results, grid[:-1]):
            lines.append(json.dumps({
                "run": r.name,
                "sensitivity": round2(r.metric_set.sensitivity),
                "specificity": round2(r.metric_set.specificity),
                "accuracy": round2(r.metric_set.accuracy),
                "counts": {"tp": r.counts.tp, "tn": r.counts.tn,
                           "fp": r.counts.fp, "fn": r.counts.fn},
                "confusion": r.cm.tolist(),
            }))
        avg = grid[-1]
        lines.append(json.dumps({
            "run": "average",
            "sensitivity": None if avg[1] == "-" else float(avg[1]),
            "specificity": None if avg[2] == "-" else float(avg[2]),
            "accuracy": None if avg[3] == "-" else float(avg[3]),
        }))
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
