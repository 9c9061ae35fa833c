"""Evaluation reports: JSON, delimited CSV, and rendered figures.

The report path always produces machine-readable output; when given an output
location it also renders a per-class IoU bar chart and a confusion-matrix
heatmap next to the delimited files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .bench import confusion_from_labels, miou
from .scene import PseudoLabelMap, Scene, UNLABELED

# Fixed PNG metadata so repeated runs write byte-identical figures.
_PNG_META = {"Software": "boxseg"}


def evaluate_labels(scene: Scene, pred: Union[np.ndarray, PseudoLabelMap]) -> dict:
    """Standard report dict for a prediction against the scene's ground truth."""
    if scene.gt_labels is None:
        raise ValueError("scene has no ground-truth labels to evaluate against")
    if isinstance(pred, PseudoLabelMap):
        classes = pred.classes
        labeled_fraction = pred.labeled_fraction
    else:
        classes = np.asarray(pred).reshape(-1)
        labeled_fraction = float(np.count_nonzero(classes != UNLABELED)) / max(len(classes), 1)
    cm = confusion_from_labels(scene.gt_labels, classes, scene.class_count)
    per_class, mean = miou(cm)
    return {
        "miou": mean,
        "per_class_iou": per_class,
        "confusion": cm.counts.tolist(),
        "labeled_fraction": labeled_fraction,
    }


def write_report_json(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")


def write_report_csv(report: dict, path) -> None:
    """Delimited form: one row per metric, per-class IoU rows keyed by class id."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("metric,class,value\n")
        f.write("miou,,%s\n" % repr(float(report["miou"])))
        f.write("labeled_fraction,,%s\n" % repr(float(report["labeled_fraction"])))
        for c, iou in enumerate(report["per_class_iou"]):
            f.write("iou,%d,%s\n" % (c, "" if iou is None else repr(float(iou))))


def render_report_figures(report: dict, out_dir, stem: str = "report") -> list[Path]:
    """Write the IoU bar chart and confusion heatmap; returns the file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []

    per_class = report["per_class_iou"]
    classes = [c for c, v in enumerate(per_class) if v is not None]
    values = [per_class[c] for c in classes]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar([str(c) for c in classes], values, color="#4878cf")
    ax.axhline(report["miou"], color="#d65f5f", linestyle="--", linewidth=1.2,
               label="mIoU = %.3f" % report["miou"])
    ax.set_xlabel("class id")
    ax.set_ylabel("IoU")
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="lower right")
    fig.tight_layout()
    bar_path = out_dir / ("%s_iou.png" % stem)
    fig.savefig(bar_path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    paths.append(bar_path)

    cmat = np.asarray(report["confusion"], dtype=np.float64)
    rows = cmat.sum(axis=1, keepdims=True)
    norm = np.divide(cmat, np.maximum(rows, 1.0))
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    im = ax.imshow(norm, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    heat_path = out_dir / ("%s_confusion.png" % stem)
    fig.savefig(heat_path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    paths.append(heat_path)
    return paths


def write_report(report: dict, out_dir, stem: str = "report", figures: bool = True) -> dict[str, str]:
    """Write JSON + CSV (and figures) under out_dir; returns the artifact paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / ("%s.json" % stem)
    csv_path = out_dir / ("%s.csv" % stem)
    write_report_json(report, json_path)
    write_report_csv(report, csv_path)
    artifacts = {"json": str(json_path), "csv": str(csv_path)}
    if figures:
        for p in render_report_figures(report, out_dir, stem):
            artifacts[p.stem] = str(p)
    return artifacts
