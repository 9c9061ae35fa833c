import json

import numpy as np
import pytest

from boxseg.cli import main
from boxseg.scene import load_labels, load_scene


@pytest.fixture(scope="module")
def scene_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("scenes") / "scene.txt"
    rc = main(
        [
            "synth",
            "--rooms",
            "2",
            "--objects-per-room",
            "2",
            "--classes",
            "4",
            "--seed",
            "5",
            "--out",
            str(path),
        ]
    )
    assert rc == 0
    return path


def test_synth_writes_parsable_scene(scene_file):
    scene = load_scene(scene_file)
    assert scene.num_points > 0
    assert len(scene.boxes) == 4
    assert scene.gt_labels is not None


def test_partition_csv(scene_file, tmp_path):
    out = tmp_path / "partition.csv"
    assert main(["partition", str(scene_file), "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "point_index,category,member_box_indices"
    scene = load_scene(scene_file)
    assert len(lines) == scene.num_points + 1


def test_grabcut_cli(scene_file, tmp_path):
    out = tmp_path / "labels_gc.txt"
    rc = main(
        ["grabcut", str(scene_file), "--voxel-size", "0.08", "--outer", "2",
         "--seed", "3", "--out", str(out)]
    )
    assert rc == 0
    labels = load_labels(out)
    scene = load_scene(scene_file)
    assert len(labels) == scene.num_points
    assert labels.labeled_mask.sum() > 0


def test_pcam_train_label_eval_chain(scene_file, tmp_path):
    ckpt = tmp_path / "clf.net"
    rc = main(["pcam-train", str(scene_file), "--epochs", "8", "--out", str(ckpt)])
    assert rc == 0
    labels = tmp_path / "labels_pcam.txt"
    rc = main(
        ["pcam-label", str(scene_file), str(ckpt), "--fraction", "0.2", "--out", str(labels)]
    )
    assert rc == 0
    out = tmp_path / "rep"
    rc = main(["eval", str(scene_file), str(labels), "--report", "json", "--out", str(out)])
    assert rc == 0
    report = json.loads((tmp_path / "rep.json").read_text())
    assert set(report) == {"miou", "per_class_iou", "confusion", "labeled_fraction"}
    assert 0.0 <= report["miou"] <= 1.0
    assert (tmp_path / "rep.csv").exists()
    assert (tmp_path / "rep_iou.png").exists()
    assert (tmp_path / "rep_confusion.png").exists()


def test_ast_train_cli(scene_file, tmp_path):
    model = tmp_path / "model.net"
    labels = tmp_path / "labels_ast.txt"
    rc = main(
        ["ast-train", str(scene_file), "--fg-init", "box", "--epochs", "5",
         "--out-model", str(model), "--out-labels", str(labels)]
    )
    assert rc == 0
    assert model.exists()
    scene = load_scene(scene_file)
    assert len(load_labels(labels)) == scene.num_points


def test_perturb_cli_translate_and_discard(scene_file, tmp_path):
    out = tmp_path / "perturbed.txt"
    rc = main(
        ["perturb", str(scene_file), "--mode", "translate", "--mag", "0.1",
         "--seed", "2", "--out", str(out)]
    )
    assert rc == 0
    orig = load_scene(scene_file)
    pert = load_scene(out)
    assert len(pert.boxes) == len(orig.boxes)
    assert pert.boxes != orig.boxes
    rc = main(
        ["perturb", str(scene_file), "--mode", "discard", "--mag", "0.9",
         "--seed", "2", "--out", str(out)]
    )
    assert rc == 0
    assert len(load_scene(out).boxes) < len(orig.boxes)


def test_perturb_scale_interval_flag(scene_file, tmp_path):
    out = tmp_path / "scaled.txt"
    rc = main(
        ["perturb", str(scene_file), "--mode", "scale", "--scale-interval", "0.9", "1.1",
         "--seed", "1", "--out", str(out)]
    )
    assert rc == 0
    orig = load_scene(scene_file)
    pert = load_scene(out)
    for a, b in zip(orig.boxes, pert.boxes):
        assert np.allclose(a.center, b.center, atol=1e-9)


def test_pipeline_cli_and_determinism(scene_file, tmp_path):
    def run(out_dir):
        rc = main(
            ["pipeline", str(scene_file), "--preset", "paper", "--seed", "9",
             "--cfg", str(cfg_path), "--out-dir", str(out_dir)]
        )
        assert rc == 0

    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(
        "[pipeline]\nclassifier_epochs = 6\n[train]\nepochs = 6\n", encoding="utf-8"
    )
    a = tmp_path / "run_a"
    b = tmp_path / "run_b"
    run(a)
    run(b)
    report = json.loads((a / "report.json").read_text())
    assert 0.0 <= report["miou"] <= 1.0
    expected = [
        "partition.csv",
        "labels_foreground.txt",
        "classifier.net",
        "labels_pcam.txt",
        "labels_refined.txt",
        "labels_final.txt",
        "model.net",
        "predictions.txt",
        "report.json",
        "report.csv",
        "report_iou.png",
        "report_confusion.png",
        "pseudo_quality.json",
        "manifest.json",
    ]
    for name in expected:
        assert (a / name).exists(), name
    # Byte-identical artifacts across reruns; the manifest records wall time
    # and is the one deliberately unstable file.
    for name in expected:
        if name == "manifest.json":
            continue
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_pipeline_cli_grabcut_mode(scene_file, tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(
        "[pipeline]\nclassifier_epochs = 4\n[train]\nepochs = 4\n"
        "[grabcut]\nvoxel_size = 0.09\nouter_iters = 2\n",
        encoding="utf-8",
    )
    out = tmp_path / "run_gc"
    rc = main(
        ["pipeline", str(scene_file), "--mode", "grabcut", "--seed", "4",
         "--cfg", str(cfg_path), "--out-dir", str(out), "--no-figures"]
    )
    assert rc == 0
    assert (out / "report.json").exists()
    assert not (out / "report_iou.png").exists()


def test_eval_rejects_length_mismatch(scene_file, tmp_path):
    bad = tmp_path / "bad_labels.txt"
    bad.write_text("LABELS v1 1\n255 0.0\n", encoding="utf-8")
    with pytest.raises(SystemExit):
        main(["eval", str(scene_file), str(bad)])


def test_cli_error_paths_return_nonzero(tmp_path):
    missing = tmp_path / "nope.txt"
    rc = main(["partition", str(missing), "--out", str(tmp_path / "x.csv")])
    assert rc == 1


def test_synth_determinism_cli(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    for p in (a, b):
        rc = main(["synth", "--rooms", "1", "--objects-per-room", "1", "--seed", "3",
                   "--out", str(p)])
        assert rc == 0
    assert a.read_bytes() == b.read_bytes()
