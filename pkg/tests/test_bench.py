import numpy as np
import pytest

from boxseg.bench import (
    ConfusionMatrix,
    PerturbSpec,
    confusion_from_labels,
    label_quality,
    miou,
    perturb_boxes,
)
from boxseg.scene import BoundingBox, PseudoLabelMap, UNLABELED


def test_perfect_prediction_gives_miou_one():
    gt = np.array([0, 1, 2, 0, 1])
    cm = confusion_from_labels(gt, gt.copy(), 3)
    per, mean = miou(cm)
    assert per == [1.0, 1.0, 1.0]
    assert mean == 1.0


def test_hand_confusion_arithmetic():
    gt = np.array([0, 0, 1, 1])
    pred = np.array([0, 1, 1, 1])
    per, mean = miou(confusion_from_labels(gt, pred, 2))
    assert per[0] == pytest.approx(1 / 2)
    assert per[1] == pytest.approx(2 / 3)
    assert mean == pytest.approx(7 / 12)


def test_all_unlabeled_predictions_give_zero_miou():
    gt = np.array([0, 1, 2])
    pred = np.full(3, UNLABELED)
    per, mean = miou(confusion_from_labels(gt, pred, 3))
    assert mean == 0.0
    assert per == [0.0, 0.0, 0.0]


def test_classes_absent_from_gt_are_excluded():
    gt = np.array([0, 0, 1])
    pred = np.array([0, 2, 1])  # class 2 predicted but absent from gt
    per, mean = miou(confusion_from_labels(gt, pred, 3))
    assert per[2] is None
    assert mean == pytest.approx((0.5 + 1.0) / 2)


def test_miou_invariant_under_class_permutation():
    rng = np.random.default_rng(0)
    gt = rng.integers(0, 4, size=200)
    pred = rng.integers(0, 4, size=200)
    _, mean = miou(confusion_from_labels(gt, pred, 4))
    perm = rng.permutation(4)
    _, mean_p = miou(confusion_from_labels(perm[gt], perm[pred], 4))
    assert mean == pytest.approx(mean_p)


def test_unlabeled_gt_points_excluded():
    gt = np.array([0, UNLABELED, 1])
    pred = np.array([0, 0, 1])
    cm = confusion_from_labels(gt, pred, 2)
    assert cm.total == 2


def test_empty_matrix_rejected():
    cm = ConfusionMatrix(np.zeros((2, 2), dtype=np.int64), np.zeros(2, dtype=np.int64))
    with pytest.raises(ValueError, match="empty"):
        miou(cm)


def test_label_quality_perfect():
    gt = np.array([0, 1, 2])
    pseudo = PseudoLabelMap.empty(3)
    for i, c in enumerate(gt):
        pseudo.set_label(i, int(c), 1.0, 1)
    q = label_quality(pseudo, gt)["overall"]
    assert q["precision"] == 1.0
    assert q["recall"] == 1.0


def test_label_quality_half_unlabeled():
    gt = np.array([0, 1, 0, 1])
    pseudo = PseudoLabelMap.empty(4)
    pseudo.set_label(0, 0, 1.0, 1)
    pseudo.set_label(1, 1, 1.0, 1)
    q = label_quality(pseudo, gt)["overall"]
    assert q["precision"] == 1.0
    assert q["recall"] == 0.5
    assert q["labeled_fraction"] == 0.5


def test_label_quality_random_labels_quarter_accuracy():
    # Sampling oracle: uniform random labels over 4 classes on 1e4 points
    # are right about a quarter of the time.
    rng = np.random.default_rng(123)
    gt = rng.integers(0, 4, size=10_000)
    pseudo = PseudoLabelMap.empty(10_000)
    pseudo.classes[:] = rng.integers(0, 4, size=10_000)
    pseudo.confidence[:] = 1.0
    pseudo.provenance[:] = 1
    q = label_quality(pseudo, gt)["overall"]
    assert abs(q["accuracy"] - 0.25) <= 0.02


def test_label_quality_per_provenance_split():
    gt = np.array([0, 0, 1, 1])
    pseudo = PseudoLabelMap.empty(4)
    pseudo.set_label(0, 0, 1.0, 1)  # BoxPrior, correct
    pseudo.set_label(2, 0, 1.0, 4)  # PCAM, wrong
    q = label_quality(pseudo, gt)
    assert q["per_provenance"]["BoxPrior"]["precision"] == 1.0
    assert q["per_provenance"]["PCAM"]["precision"] == 0.0


def boxes_fixture(n=10, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        lo = rng.uniform(0, 5, size=3)
        hi = lo + rng.uniform(0.5, 2.0, size=3)
        out.append(BoundingBox(tuple(lo), tuple(hi), int(rng.integers(0, 3))))
    return out


def test_translate_zero_is_identity():
    boxes = boxes_fixture()
    out = perturb_boxes(boxes, PerturbSpec("translate", 0.0, seed=1))
    assert out == boxes


def test_scale_unit_interval_is_identity():
    boxes = boxes_fixture()
    out = perturb_boxes(boxes, PerturbSpec("scale", (1.0, 1.0), seed=1))
    assert out == boxes


def test_translate_preserves_extents():
    boxes = boxes_fixture()
    out = perturb_boxes(boxes, PerturbSpec("translate", 0.25, seed=2))
    for a, b in zip(boxes, out):
        assert np.allclose(a.size, b.size)
        assert not np.allclose(a.center, b.center)


def test_scale_preserves_centers():
    boxes = boxes_fixture()
    out = perturb_boxes(boxes, PerturbSpec("scale", (0.8, 1.2), seed=3))
    for a, b in zip(boxes, out):
        assert np.allclose(a.center, b.center, atol=1e-9)


def test_discard_survival_rate():
    # Binomial oracle: dropping each of 1000 boxes with p=0.2 over 50 seeds
    # leaves a surviving fraction of 0.8 within 0.03.
    boxes = boxes_fixture(n=1000, seed=4)
    fracs = []
    for seed in range(50):
        out = perturb_boxes(boxes, PerturbSpec("discard", 0.2, seed=seed))
        fracs.append(len(out) / len(boxes))
    assert abs(np.mean(fracs) - 0.8) <= 0.03


def test_perturb_deterministic_given_seed():
    boxes = boxes_fixture()
    a = perturb_boxes(boxes, PerturbSpec("translate", 0.1, seed=9))
    b = perturb_boxes(boxes, PerturbSpec("translate", 0.1, seed=9))
    assert a == b


def test_inverted_scale_interval_rejected():
    with pytest.raises(ValueError, match="inverted"):
        PerturbSpec("scale", (1.2, 0.8)).validate()


def test_bad_mode_rejected():
    with pytest.raises(ValueError, match="unknown"):
        PerturbSpec("rotate", 0.1).validate()


def test_drop_probability_range_checked():
    with pytest.raises(ValueError):
        PerturbSpec("discard", 1.5).validate()
