"""Accuracy, Macro F1 and Weighted F1, plus side-by-side result tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .dataset import TASKS
from .errors import LengthMismatch

MISSING = "—"
METRICS = ("accuracy", "macro_f1", "weighted_f1")


@dataclass
class ConfusionTally:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    correct: int
    total: int

    @property
    def support(self) -> np.ndarray:
        return self.tp + self.fn

    def merge(self, other: "ConfusionTally") -> "ConfusionTally":
        return ConfusionTally(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                              self.correct + other.correct, self.total + other.total)


def tally(golds, preds, n_classes: int) -> ConfusionTally:
    golds = np.asarray(golds, dtype=np.int64).reshape(-1)
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    if golds.shape != preds.shape:
        raise LengthMismatch(f"{golds.size} golds vs {preds.size} predictions")
    hit = golds == preds
    tp = np.bincount(golds[hit], minlength=n_classes)
    fp = np.bincount(preds[~hit], minlength=n_classes)
    fn = np.bincount(golds[~hit], minlength=n_classes)
    return ConfusionTally(tp, fp, fn, int(hit.sum()), int(golds.size))


def scores(t: ConfusionTally, include_empty: bool = False) -> dict | None:
    """None for an empty tally (metrics absent)."""
    if t.total == 0:
        return None
    tp, fp, fn = (x.astype(np.float64) for x in (t.tp, t.fp, t.fn))
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        rec = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)
    support = t.support.astype(np.float64)
    present = support > 0
    macro = float(f1.mean()) if include_empty else float(f1[present].mean())
    weighted = float((f1 * support).sum() / support.sum())
    return {
        "accuracy": t.correct / t.total,
        "macro_f1": macro,
        "weighted_f1": weighted,
        "per_class_f1": f1,
    }


def evaluate(golds, preds, n_classes: int, include_empty: bool = False) -> dict | None:
    return scores(tally(golds, preds, n_classes), include_empty)


def evaluate_tasks(golds: dict, preds: dict, n_classes: dict, include_empty: bool = False) -> dict:
    return {a: evaluate(golds[a], preds[a], n_classes[a], include_empty) for a in TASKS if a in golds}


# --------------------------------------------------------------------------
# reports


def _fmt(x) -> str:
    return MISSING if x is None else f"{x:.4f}"


def side_by_side_report(results: dict, tasks=TASKS):
    """``results[setting][method][task]`` -> scores dict (or None).

    Returns ``(text, csv_text)``. Methods are rows; tasks x metrics are columns;
    each setting is its own panel. Absent cells render as an em dash.
    """
    lines = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["setting", "method", "task", *METRICS])
    for setting, by_method in results.items():
        methods = list(by_method)
        header = ["method"] + [f"{a}:{m}" for a in tasks for m in ("acc", "macro", "weighted")]
        rows = []
        for method in methods:
            row = [method]
            for a in tasks:
                s = by_method[method].get(a)
                for m in METRICS:
                    row.append(_fmt(None if s is None else s[m]))
                w.writerow([setting, method, a] + [
                    "" if s is None else f"{s[m]:.6f}" for m in METRICS])
            rows.append(row)
        widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
        lines.append(f"== {setting} ==")
        lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)))
        for r in rows:
            lines.append("  ".join(str(c).ljust(widths[i]) for i, c in enumerate(r)))
        lines.append("")
    return "\n".join(lines), buf.getvalue()
