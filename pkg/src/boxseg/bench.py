"""Evaluation metrics, pseudo-label quality, and box perturbation harness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .scene import UNLABELED, BoundingBox, PROVENANCE_NAMES, PseudoLabelMap


@dataclass
class ConfusionMatrix:
    """Class confusion counts; rows are ground truth, columns predictions.

    Unlabeled predictions are tracked separately per ground-truth class and
    count as false negatives for that class.
    """

    counts: np.ndarray  # (C, C) int64
    unlabeled: np.ndarray  # (C,) int64

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.unlabeled = np.asarray(self.unlabeled, dtype=np.int64).reshape(-1)
        c = self.counts.shape[0]
        if self.counts.shape != (c, c) or self.unlabeled.shape != (c,):
            raise ValueError("confusion matrix shape mismatch")
        if np.any(self.counts < 0) or np.any(self.unlabeled < 0):
            raise ValueError("negative confusion count")

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum() + self.unlabeled.sum())


def confusion_from_labels(
    gt: np.ndarray, pred: Union[np.ndarray, PseudoLabelMap], num_classes: int
) -> ConfusionMatrix:
    """Confusion over points with ground truth; predictions may be unlabeled."""
    if isinstance(pred, PseudoLabelMap):
        pred = pred.classes
    gt = np.asarray(gt).reshape(-1)
    pred = np.asarray(pred).reshape(-1)
    if gt.shape != pred.shape:
        raise ValueError("gt/prediction length mismatch")
    valid = gt != UNLABELED
    gt = gt[valid]
    pred = pred[valid]
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    unlabeled = np.zeros(num_classes, dtype=np.int64)
    lab = pred != UNLABELED
    flat = gt[lab] * num_classes + pred[lab]
    counts += np.bincount(flat, minlength=num_classes * num_classes).reshape(
        num_classes, num_classes
    )
    unlabeled += np.bincount(gt[~lab], minlength=num_classes)
    return ConfusionMatrix(counts=counts, unlabeled=unlabeled)


def miou(cm: ConfusionMatrix) -> tuple[list[float | None], float]:
    """Per-class IoU and the mean over classes present in the ground truth.

    IoU_c = TP / (TP + FP + FN), with unlabeled predictions counted as FN.
    Classes with no ground-truth points get None and are excluded from the
    mean (prediction-only classes are likewise excluded).
    """
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    c = cm.num_classes
    tp = np.diag(cm.counts).astype(np.float64)
    fp = cm.counts.sum(axis=0) - tp
    fn = cm.counts.sum(axis=1) - tp + cm.unlabeled
    gt_present = (cm.counts.sum(axis=1) + cm.unlabeled) > 0
    per_class: list[float | None] = []
    vals = []
    for k in range(c):
        if not gt_present[k]:
            per_class.append(None)
            continue
        denom = tp[k] + fp[k] + fn[k]
        iou = float(tp[k] / denom) if denom > 0 else 0.0
        per_class.append(iou)
        vals.append(iou)
    return per_class, float(np.mean(vals)) if vals else 0.0


def label_quality(pseudo: PseudoLabelMap, gt: np.ndarray) -> dict:
    """Precision/recall/accuracy of a pseudo-label map against ground truth.

    Unlabeled points are excluded from precision and accuracy but count in the
    recall denominator. Per-provenance breakdowns cover each tag present.
    """
    gt = np.asarray(gt).reshape(-1)
    if gt.shape[0] != len(pseudo):
        raise ValueError("gt length mismatch")
    evaluated = gt != UNLABELED

    def stats(mask: np.ndarray) -> dict:
        labeled = mask & pseudo.labeled_mask
        n_lab = int(np.count_nonzero(labeled))
        n_eval = int(np.count_nonzero(mask))
        correct = int(np.count_nonzero(labeled & (pseudo.classes == gt)))
        return {
            "precision": correct / n_lab if n_lab else 0.0,
            "recall": correct / n_eval if n_eval else 0.0,
            "accuracy": correct / n_lab if n_lab else 0.0,
            "labeled_fraction": n_lab / n_eval if n_eval else 0.0,
            "labeled": n_lab,
            "evaluated": n_eval,
        }

    out = {"overall": stats(evaluated), "per_provenance": {}}
    for code in np.unique(pseudo.provenance):
        if code == 0:
            continue
        name = PROVENANCE_NAMES[int(code)]
        out["per_provenance"][name] = stats(evaluated & (pseudo.provenance == code))
    return out


@dataclass(frozen=True)
class PerturbSpec:
    """Bounding-box corruption: translate, scale, or discard.

    magnitude means: max center shift as a fraction of box size (translate),
    a (lo, hi) scale-ratio interval or a symmetric half-width f for
    [1 - f, 1 + f] (scale), or the independent drop probability (discard).
    """

    mode: str
    magnitude: Union[float, tuple[float, float]] = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in ("translate", "scale", "discard"):
            raise ValueError("unknown perturbation mode %r" % self.mode)
        if self.mode == "scale":
            lo, hi = self.interval()
            if lo <= 0 or hi <= 0:
                raise ValueError("scale interval must be positive")
            if lo > hi:
                raise ValueError("inverted scale interval")
        else:
            mag = float(self.magnitude)  # type: ignore[arg-type]
            if self.mode == "translate" and mag < 0:
                raise ValueError("translate fraction must be nonnegative")
            if self.mode == "discard" and not (0 <= mag <= 1):
                raise ValueError("drop probability must be in [0, 1]")

    def interval(self) -> tuple[float, float]:
        if isinstance(self.magnitude, tuple):
            return float(self.magnitude[0]), float(self.magnitude[1])
        f = float(self.magnitude)
        return 1.0 - f, 1.0 + f


def perturb_boxes(boxes: list[BoundingBox], spec: PerturbSpec) -> list[BoundingBox]:
    """Deterministically corrupted copy of the box list.

    Translation shifts each center per axis by u * size_axis with
    u ~ U(-f, f) and leaves extents untouched; scaling multiplies extents
    about the center by one ratio per box; discarding drops each box
    independently. All draws come from a generator seeded by spec.seed.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    out: list[BoundingBox] = []
    if spec.mode == "translate":
        f = float(spec.magnitude)  # type: ignore[arg-type]
        for b in boxes:
            u = rng.uniform(-f, f, size=3)
            shift = u * b.size
            out.append(
                BoundingBox(
                    tuple(np.asarray(b.min_corner) + shift),
                    tuple(np.asarray(b.max_corner) + shift),
                    b.class_id,
                )
            )
    elif spec.mode == "scale":
        lo, hi = spec.interval()
        for b in boxes:
            s = float(rng.uniform(lo, hi))
            half = 0.5 * b.size
            # Written so that s == 1 reproduces the corners bit-exactly.
            new_min = np.asarray(b.min_corner) + (1.0 - s) * half
            new_max = np.asarray(b.max_corner) - (1.0 - s) * half
            out.append(BoundingBox(tuple(new_min), tuple(new_max), b.class_id))
    else:  # discard
        p = float(spec.magnitude)  # type: ignore[arg-type]
        for b in boxes:
            if rng.random() >= p:
                out.append(b)
    return out
