"""Confusion matrices and precision/recall/F1 reports."""

import json
from dataclasses import dataclass, field

import numpy as np

from .data import CLASS_NAMES


def confusion_matrix(y_true, y_pred, num_classes=len(CLASS_NAMES)):
    """Counts with rows = true class, columns = predicted class."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def normalize_cm(cm):
    """Row-stochastic version of ``cm``; all-zero rows stay zero."""
    cm = np.asarray(cm, dtype=np.float64)
    sums = cm.sum(axis=1, keepdims=True)
    return np.divide(cm, sums, out=np.zeros_like(cm), where=sums > 0)


def _safe_ratio(num, den):
    return (num / den, False) if den > 0 else (0.0, True)


def f1_score(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def classification_report(cm, class_names=None):
    """Per-class precision, recall, F1 and support plus macro and weighted averages.

    Zero denominators give 0 and set an ``undefined`` flag on that entry.
    """
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion matrix counts must be non-negative")
    k = cm.shape[0]
    names = list(class_names) if class_names is not None else (
        list(CLASS_NAMES) if k == len(CLASS_NAMES) else [str(i) for i in range(k)])
    rows = []
    for i in range(k):
        tp = int(cm[i, i])
        precision, p_undef = _safe_ratio(tp, int(cm[:, i].sum()))
        recall, r_undef = _safe_ratio(tp, int(cm[i, :].sum()))
        undefined = [n for n, flag in (("precision", p_undef), ("recall", r_undef)) if flag]
        if precision + recall == 0:
            undefined.append("f1")
        rows.append({
            "class": names[i],
            "precision": float(precision),
            "recall": float(recall),
            "f1": float(f1_score(precision, recall)),
            "support": int(cm[i, :].sum()),
            "undefined": undefined,
        })
    support = np.array([r["support"] for r in rows], dtype=np.float64)
    total = support.sum()
    macro, weighted = {}, {}
    for key in ("precision", "recall", "f1"):
        vals = np.array([r[key] for r in rows])
        macro[key] = float(vals.mean())
        weighted[key] = float((vals * support).sum() / total) if total else 0.0
    macro["support"] = weighted["support"] = int(total)
    return {"classes": rows, "macro_avg": macro, "weighted_avg": weighted}


@dataclass
class EvalReport:
    counts: np.ndarray
    loss: float
    class_names: list = field(default_factory=lambda: list(CLASS_NAMES))

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def accuracy(self):
        return float(np.trace(self.counts) / self.counts.sum()) if self.n else 0.0

    @property
    def normalized(self):
        return normalize_cm(self.counts)

    @property
    def report(self):
        return classification_report(self.counts, self.class_names)

    def to_text(self):
        rep = self.report
        width = max(len("weighted avg"), *(len(n) for n in self.class_names)) + 2
        lines = [f"{'Class':<{width}}{'Precision':>10}{'Recall':>10}{'F1-score':>10}{'Support':>10}"]
        for r in rep["classes"]:
            lines.append(f"{r['class']:<{width}}{r['precision']:>10.2f}{r['recall']:>10.2f}"
                         f"{r['f1']:>10.2f}{r['support']:>10d}")
        lines.append("")
        for label, key in (("macro avg", "macro_avg"), ("weighted avg", "weighted_avg")):
            a = rep[key]
            lines.append(f"{label:<{width}}{a['precision']:>10.2f}{a['recall']:>10.2f}"
                         f"{a['f1']:>10.2f}{a['support']:>10d}")
        lines.append("")
        lines.append(f"accuracy {self.accuracy:.4f} ({int(np.trace(self.counts))}/{self.n})")
        lines.append(f"mean loss {self.loss:.4f}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "loss": self.loss,
            "samples": self.n,
            "class_names": list(self.class_names),
            "confusion_matrix": self.counts.tolist(),
            "normalized_confusion_matrix": self.normalized.tolist(),
            **self.report,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
