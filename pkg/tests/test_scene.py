import io

import numpy as np
import pytest

from boxseg.scene import (
    BoundingBox,
    PseudoLabelMap,
    Scene,
    SceneFormatError,
    SceneInvariantError,
    Subcloud,
    UNLABELED,
    parse_labels,
    parse_scene,
    point_in_box,
    serialize_labels,
    serialize_scene,
)


def make_scene(n=3, with_box=True):
    xyz = np.array([[0.0, 0.0, 0.0], [0.5, 0.5, 0.5], [2.0, 2.0, 2.0]])[:n]
    boxes = [BoundingBox((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), 1)] if with_box else []
    subclouds = [Subcloud(0, n, (1, 1))]
    return Scene(xyz=xyz, boxes=boxes, subclouds=subclouds, class_count=2)


def test_point_in_box_center():
    b = BoundingBox((0, 0, 0), (2, 2, 2), 0)
    assert point_in_box((1.0, 1.0, 1.0), b)


def test_point_in_box_face_is_inclusive():
    b = BoundingBox((0, 0, 0), (2, 2, 2), 0)
    assert point_in_box((2.0, 1.0, 1.0), b)
    assert point_in_box((0.0, 0.0, 0.0), b)


def test_point_just_outside():
    b = BoundingBox((0, 0, 0), (2, 2, 2), 0)
    assert not point_in_box((2.0 + 1e-9, 1.0, 1.0), b)


def test_point_in_box_translation_invariant():
    rng = np.random.default_rng(0)
    for _ in range(200):
        lo = rng.normal(size=3)
        hi = lo + rng.random(3)
        b = BoundingBox(tuple(lo), tuple(hi), 0)
        p = rng.normal(size=3)
        t = rng.normal(size=3) * 10
        b2 = BoundingBox(tuple(lo + t), tuple(hi + t), 0)
        assert point_in_box(p, b) == point_in_box(p + t, b2)


def test_inverted_box_rejected():
    with pytest.raises(SceneInvariantError, match="inverted box extent"):
        BoundingBox((0, 0, 0), (1, -1, 1), 0).validate()


def test_scene_roundtrip_identity():
    scene = make_scene()
    buf = io.StringIO()
    serialize_scene(scene, buf)
    buf.seek(0)
    assert parse_scene(buf) == scene


def test_scene_roundtrip_with_rgb_and_gt():
    xyz = np.array([[0.0, 0.25, 1.5], [1.0, 2.0, 3.0]])
    rgb = np.array([[0.1, 0.2, 0.3], [1.0, 0.0, 0.5]])
    gt = np.array([0, UNLABELED])
    scene = Scene(
        xyz=xyz,
        boxes=[BoundingBox((0, 0, 0), (1, 2, 3), 2)],
        subclouds=[Subcloud(0, 2, (1, 0, 1))],
        class_count=3,
        rgb=rgb,
        background_class_ids=frozenset({0}),
        gt_labels=gt,
    )
    buf = io.StringIO()
    serialize_scene(scene, buf)
    buf.seek(0)
    assert parse_scene(buf) == scene


def test_empty_point_scene_parses():
    text = "SCENE v1 0 0 0 2\n"
    scene = parse_scene(io.StringIO(text))
    assert scene.num_points == 0
    assert scene.class_count == 2


def test_parse_rejects_inverted_box():
    text = "SCENE v1 1 1 0 2\nP 0 0 0\nB 0 2 0 1 1 1 0\n"
    with pytest.raises(SceneFormatError, match="inverted box extent"):
        parse_scene(io.StringIO(text))


def test_parse_rejects_nan_coordinate():
    text = "SCENE v1 1 0 0 2\nP 0 nan 0\n"
    with pytest.raises(SceneFormatError, match="non-finite"):
        parse_scene(io.StringIO(text))


def test_parse_rejects_bad_header():
    with pytest.raises(SceneFormatError, match="header"):
        parse_scene(io.StringIO("SCENE v2 0 0 0 2\n"))


def test_parse_rejects_out_of_range_gt_index():
    text = "SCENE v1 1 0 0 2\nP 0 0 0\nG 5 1\n"
    with pytest.raises(SceneFormatError, match="out of range"):
        parse_scene(io.StringIO(text))


def test_parse_rejects_overlapping_subclouds():
    text = "SCENE v1 4 0 2 2\nP 0 0 0\nP 1 0 0\nP 2 0 0\nP 3 0 0\nS 0 3 11\nS 2 4 11\n"
    with pytest.raises(SceneFormatError, match="overlapping subcloud"):
        parse_scene(io.StringIO(text))


def test_background_ids_derived_from_tags_minus_boxes():
    text = "SCENE v1 1 1 1 3\nP 0 0 0\nB 0 0 0 1 1 1 2\nS 0 1 111\n"
    scene = parse_scene(io.StringIO(text))
    assert scene.background_class_ids == frozenset({0, 1})


def test_background_ids_kept_via_k_records():
    text = "SCENE v1 1 1 1 3\nP 0 0 0\nB 0 0 0 1 1 1 2\nS 0 1 111\nK 0\n"
    scene = parse_scene(io.StringIO(text))
    assert scene.background_class_ids == frozenset({0})


def test_background_box_class_conflict_rejected():
    xyz = np.zeros((1, 3))
    with pytest.raises(SceneInvariantError, match="background"):
        Scene(
            xyz=xyz,
            boxes=[BoundingBox((0, 0, 0), (1, 1, 1), 1)],
            subclouds=[],
            class_count=2,
            background_class_ids=frozenset({1}),
        )


def test_labels_all_unlabeled_sentinels():
    labels = PseudoLabelMap.empty(4)
    buf = io.StringIO()
    serialize_labels(labels, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "LABELS v1 4"
    assert lines[1:] == ["255 0.0"] * 4


def test_labels_record_roundtrip():
    labels = PseudoLabelMap.empty(2)
    labels.set_label(0, 3, 1.0, 4)
    buf = io.StringIO()
    serialize_labels(labels, buf)
    assert "3 1.0" in buf.getvalue()
    buf.seek(0)
    again = parse_labels(buf)
    assert again == labels


def test_labels_length_mismatch_rejected():
    labels = PseudoLabelMap.empty(2)
    with pytest.raises(SceneInvariantError, match="expected"):
        serialize_labels(labels, io.StringIO(), num_points=3)


def test_labels_roundtrip_random():
    rng = np.random.default_rng(1)
    labels = PseudoLabelMap.empty(50)
    for i in range(50):
        if rng.random() < 0.5:
            labels.set_label(i, int(rng.integers(0, 6)), float(rng.random()), 1)
    buf = io.StringIO()
    serialize_labels(labels, buf)
    buf.seek(0)
    assert parse_labels(buf) == labels


def test_unlabeled_has_no_confidence():
    labels = PseudoLabelMap(
        classes=np.array([UNLABELED, 2]),
        confidence=np.array([0.7, 0.9]),
        provenance=np.array([1, 1], dtype=np.uint8),
    )
    assert labels.confidence[0] == 0.0
    assert labels.provenance[0] == 0
