"""Binary traversability metrics and the Known/Unknown split report.

Class 1 is traversable, class 0 non-traversable. Every "m" metric is the
mean over the two classes, reported in percent. The per-class "accuracy"
is TP / (TP + FP). A class missing from both prediction and ground truth
scores 100 on every metric; a ratio with a zero denominator otherwise
scores 0.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError

METRICS = ("mAcc", "mRecall", "mF1", "mIoU")
SPLITS = ("overall", "known", "unknown")


def confusion_counts(pred, target):
    """2x2 integer confusion matrix indexed ``[target, pred]``."""
    p = np.asarray(pred).astype(bool)
    t = np.asarray(target).astype(bool)
    if p.shape != t.shape:
        raise ShapeError(f"prediction shape {p.shape} != target shape {t.shape}")
    idx = 2 * t.ravel().astype(np.int64) + p.ravel().astype(np.int64)
    return np.bincount(idx, minlength=4).reshape(2, 2)


def _ratio(num, den, absent):
    if absent:
        return 1.0
    return num / den if den else 0.0


def metrics_from_confusion(cm):
    cm = np.asarray(cm, dtype=np.int64)
    per_class = []
    for k in (0, 1):
        tp = int(cm[k, k])
        fp = int(cm[1 - k, k])
        fn = int(cm[k, 1 - k])
        absent = tp + fp + fn == 0
        per_class.append(
            (
                _ratio(tp, tp + fp, absent),
                _ratio(tp, tp + fn, absent),
                _ratio(2 * tp, 2 * tp + fp + fn, absent),
                _ratio(tp, tp + fp + fn, absent),
            )
        )
    means = 100.0 * np.mean(np.array(per_class), axis=0)
    return dict(zip(METRICS, (float(v) for v in means)))


def segmentation_metrics(pred, target):
    """``{"mAcc", "mRecall", "mF1", "mIoU"}`` in percent for one mask pair."""
    return metrics_from_confusion(confusion_counts(pred, target))


@dataclass(frozen=True)
class EvalReport:
    overall: dict
    known: dict = None
    unknown: dict = None
    counts: tuple = (0, 0, 0)

    @property
    def delta(self):
        if self.known is None or self.unknown is None:
            return None
        return {m: self.unknown[m] - self.known[m] for m in METRICS}

    def columns(self):
        return [f"{split}_{m}" for split in (*SPLITS, "delta") for m in METRICS]

    def values(self):
        out = []
        for block in (self.overall, self.known, self.unknown, self.delta):
            out.extend("" if block is None else f"{block[m]:.4f}" for m in METRICS)
        return out

    def to_csv(self, label="otfuse"):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", *self.columns(), "n_overall", "n_known", "n_unknown"])
        writer.writerow([label, *self.values(), *self.counts])
        return buf.getvalue()


def split_evaluate(samples, train_combinations):
    """Pool pixel counts per split and report Overall / Known / Unknown.

    ``samples`` yields ``(combination, pred, target)``; a sample is Known
    when its combination is in ``train_combinations``. Empty splits are
    reported as ``None`` and the delta block is then absent.
    """
    train = {tuple(c) for c in train_combinations}
    totals = {s: np.zeros((2, 2), dtype=np.int64) for s in SPLITS}
    counts = dict.fromkeys(SPLITS, 0)
    for combo, pred, target in samples:
        cm = confusion_counts(pred, target)
        split = "known" if tuple(combo) in train else "unknown"
        for s in ("overall", split):
            totals[s] += cm
            counts[s] += 1
    if counts["overall"] == 0:
        raise ShapeError("split_evaluate needs at least one sample")
    blocks = {s: metrics_from_confusion(totals[s]) if counts[s] else None for s in SPLITS}
    return EvalReport(blocks["overall"], blocks["known"], blocks["unknown"],
                      (counts["overall"], counts["known"], counts["unknown"]))
