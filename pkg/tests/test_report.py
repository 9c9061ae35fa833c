import json

import numpy as np
import pytest

from boxseg.report import (
    evaluate_labels,
    render_report_figures,
    write_report,
    write_report_csv,
)
from boxseg.scene import Scene, Subcloud, UNLABELED


def tiny_scene():
    xyz = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]])
    return Scene(
        xyz=xyz,
        boxes=[],
        subclouds=[Subcloud(0, 4, (1, 1))],
        class_count=2,
        gt_labels=np.array([0, 0, 1, 1]),
    )


def test_evaluate_labels_fields():
    scene = tiny_scene()
    pred = np.array([0, 1, 1, UNLABELED])
    report = evaluate_labels(scene, pred)
    assert set(report) == {"miou", "per_class_iou", "confusion", "labeled_fraction"}
    assert report["labeled_fraction"] == 0.75
    assert len(report["per_class_iou"]) == 2
    assert np.asarray(report["confusion"]).shape == (2, 2)


def test_evaluate_requires_ground_truth():
    scene = tiny_scene()
    scene.gt_labels = None
    with pytest.raises(ValueError, match="ground-truth"):
        evaluate_labels(scene, np.zeros(4, dtype=int))


def test_report_files_and_figures(tmp_path):
    scene = tiny_scene()
    report = evaluate_labels(scene, np.array([0, 0, 1, 1]))
    artifacts = write_report(report, tmp_path, "rep", figures=True)
    data = json.loads((tmp_path / "rep.json").read_text())
    assert data["miou"] == 1.0
    csv_lines = (tmp_path / "rep.csv").read_text().strip().split("\n")
    assert csv_lines[0] == "metric,class,value"
    assert any(line.startswith("miou,,") for line in csv_lines)
    assert (tmp_path / "rep_iou.png").exists()
    assert (tmp_path / "rep_confusion.png").exists()
    assert set(artifacts) >= {"json", "csv"}


def test_figures_deterministic(tmp_path):
    scene = tiny_scene()
    report = evaluate_labels(scene, np.array([0, 1, 1, 1]))
    a = tmp_path / "a"
    b = tmp_path / "b"
    render_report_figures(report, a, "r")
    render_report_figures(report, b, "r")
    assert (a / "r_iou.png").read_bytes() == (b / "r_iou.png").read_bytes()
    assert (a / "r_confusion.png").read_bytes() == (b / "r_confusion.png").read_bytes()


def test_csv_handles_absent_class(tmp_path):
    report = {
        "miou": 0.5,
        "per_class_iou": [0.5, None],
        "confusion": [[1, 0], [0, 0]],
        "labeled_fraction": 1.0,
    }
    write_report_csv(report, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().strip().split("\n")
    assert "iou,1," in lines[-1]
