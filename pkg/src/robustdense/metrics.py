"""Confusion-matrix accumulation, per-class F1, overall accuracy, mean F1."""

import numpy as np

from .errors import ValidationError

CLASS_NAMES = ("Imp-suf", "Building", "Low-veg", "Tree", "Car", "Clutter")
IGNORE_INDEX = 255

# Mean F1 averages the five foreground classes; clutter pixels still count in OA.
FOREGROUND_CLASSES = (0, 1, 2, 3, 4)


class ConfusionMatrix:
    """Pixel counts with rows = true class, cols = predicted class."""

    def __init__(self, num_classes: int, counts: np.ndarray | None = None):
        if counts is None:
            counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (num_classes, num_classes) or (counts < 0).any():
            raise ValidationError(f"bad confusion counts of shape {counts.shape}")
        self.num_classes = num_classes
        self.counts = counts

    def accumulate(self, pred, label, ignore_index: int = IGNORE_INDEX) -> "ConfusionMatrix":
        """Add one raster pair in place; pixels labelled ignore_index are skipped."""
        pred = np.asarray(pred).ravel()
        label = np.asarray(label).ravel()
        if pred.shape != label.shape:
            raise ValidationError(f"pred shape {pred.shape} != label shape {label.shape}")
        k = self.num_classes
        if pred.size and (pred.min() < 0 or pred.max() >= k):
            raise ValidationError(f"pred values must be in [0, {k})")
        keep = label != ignore_index
        label = label[keep]
        pred = pred[keep]
        if label.size and (label.min() < 0 or label.max() >= k):
            raise ValidationError(f"labels must be in [0, {k}) or {ignore_index}")
        self.counts += np.bincount(
            k * label.astype(np.int64) + pred.astype(np.int64), minlength=k * k
        ).reshape(k, k)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValidationError("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def per_class_f1(cm: ConfusionMatrix):
    """Returns (f1, defined): F1_k = 2PR/(P+R), 0 with defined=False for classes
    absent from both prediction and truth."""
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    colsum = counts.sum(axis=0)
    rowsum = counts.sum(axis=1)
    f1 = np.zeros(cm.num_classes)
    defined = (colsum + rowsum) > 0
    # 2PR/(P+R) == 2*tp / (colsum + rowsum) wherever the denominator is nonzero
    np.divide(2 * tp, colsum + rowsum, out=f1, where=defined)
    return f1, defined


def overall_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValidationError("overall accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def mean_f1(f1, class_mask) -> float:
    f1 = np.asarray(f1, dtype=np.float64)
    class_mask = np.asarray(class_mask, dtype=bool)
    if class_mask.shape != f1.shape:
        raise ValidationError(f"class mask shape {class_mask.shape} != f1 shape {f1.shape}")
    if not class_mask.any():
        raise ValidationError("mean_f1 needs at least one selected class")
    return float(f1[class_mask].mean())


def foreground_mask(class_names=CLASS_NAMES) -> np.ndarray:
    """Everything except Clutter; all classes when no Clutter is present."""
    mask = np.array([name != "Clutter" for name in class_names], dtype=bool)
    return mask if mask.any() else np.ones(len(class_names), dtype=bool)


def metrics_report(cm: ConfusionMatrix, class_names=CLASS_NAMES,
                   damage_fraction: float | None = None) -> dict:
    """JSON-ready report: per-class F1, OA, mean F1 over foreground classes."""
    if len(class_names) != cm.num_classes:
        raise ValidationError(
            f"{len(class_names)} class names for {cm.num_classes}-class matrix"
        )
    f1, defined = per_class_f1(cm)
    report = {
        "class_names": list(class_names),
        "per_class_f1": [float(v) for v in f1],
        "f1_undefined": [bool(not d) for d in defined],
        "oa": overall_accuracy(cm),
        "mean_f1": mean_f1(f1, foreground_mask(class_names)),
        "confusion": cm.counts.tolist(),
    }
    if damage_fraction is not None:
        report["damage_fraction"] = float(damage_fraction)
    return report
