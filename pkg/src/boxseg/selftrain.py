"""Attention-regularized self-training on merged pseudo labels.

The segmentation network trains on whatever points currently carry a pseudo
label (foreground priors plus refined background labels), with two extras:

* an attention-modulated cross-entropy over points inside exactly one box,
  weighted into the total loss by a small factor; and
* a per-epoch refresh that assigns pseudo labels to ambiguous points (inside
  overlapping boxes) whenever the prediction, renormalized over the classes of
  the overlapping boxes, clears a confidence gate. Refreshed entries replace
  the previous epoch's, never accumulate.

Foreground labels from the initial map are never overwritten.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .inputs import SubcloudBatch, subcloud_batches
from .net import PointNetLite, attention_ce, segmentation_ce
from .partition import AMBIGUOUS, FOREGROUND, PartitionMap
from .scene import PROV_AST_PL, PseudoLabelMap, Scene, UNLABELED


def attention_loss(attention: np.ndarray, probs: np.ndarray, box_mask: np.ndarray) -> float:
    """Mean attention-modulated cross-entropy over unique-box points."""
    loss, _ = attention_ce(attention, probs, box_mask)
    return loss


def combined_loss(l_ce: float, l_a: float, alpha: float) -> float:
    if alpha < 0:
        raise ValueError("attention weight must be nonnegative")
    return l_ce + alpha * l_a


def pseudo_label_ambiguous(
    probs: np.ndarray,
    candidates: list[tuple[int, ...]],
    tau: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Confidence-gated pseudo labels for points in overlapping boxes.

    For each row of probs, the argmax is taken over that point's candidate
    classes (the union of its boxes' classes) after renormalizing over them;
    a label is emitted only when the renormalized maximum reaches tau.
    Returns (accepted mask, classes, confidences) aligned with probs rows.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.shape[0]
    accept = np.zeros(n, dtype=bool)
    classes = np.full(n, UNLABELED, dtype=np.int64)
    confs = np.zeros(n, dtype=np.float64)
    for i in range(n):
        cand = np.asarray(sorted(candidates[i]), dtype=np.int64)
        vals = probs[i, cand]
        total = vals.sum()
        renorm = vals / total if total > 0 else np.full(cand.size, 1.0 / cand.size)
        j = int(np.argmax(renorm))
        if renorm[j] >= tau:
            accept[i] = True
            classes[i] = cand[j]
            confs[i] = renorm[j]
    return accept, classes, confs


@dataclass
class TrainResult:
    net: PointNetLite
    labels: PseudoLabelMap
    loss_history: list[float]


def train_segmentation(
    scene: Scene,
    part: PartitionMap,
    initial: PseudoLabelMap,
    cfg: TrainConfig,
) -> TrainResult:
    """Self-training loop over merged pseudo labels; returns the net and final map."""
    cfg.validate()
    if not np.any(initial.labeled_mask):
        raise ValueError("no labeled points at start of training")

    batches = subcloud_batches(scene, cfg.context, cfg.context_k, cfg.batch_points)
    net = PointNetLite(
        classes=scene.class_count,
        in_dim=batches[0].x.shape[1],
        hidden=cfg.hidden,
        context=cfg.context,
        context_k=cfg.context_k,
        seed=cfg.seed,
    )
    labels = initial.copy()
    if cfg.epochs == 0:
        return TrainResult(net=net, labels=labels, loss_history=[])

    fg_mask = part.category == FOREGROUND
    amb_mask = part.category == AMBIGUOUS
    box_class = np.full(scene.num_points, -1, dtype=np.int64)
    for i in np.nonzero(fg_mask)[0]:
        box_class[i] = scene.boxes[part.member_boxes[i][0]].class_id
    candidates_by_point: dict[int, tuple[int, ...]] = {
        int(i): tuple(sorted({scene.boxes[b].class_id for b in part.member_boxes[i]}))
        for i in np.nonzero(amb_mask)[0]
    }
    # Points eligible for label refresh: ambiguous and not labeled upfront.
    refresh_idx = np.array(
        [i for i in sorted(candidates_by_point) if initial.classes[i] == UNLABELED],
        dtype=np.int64,
    )

    # Per-batch constants: attention selections/masks and refresh rows.
    att_sel: list[np.ndarray] = []
    att_mask: list[np.ndarray] = []
    refresh_rows: list[np.ndarray] = []
    refresh_set = set(int(i) for i in refresh_idx)
    for b in batches:
        sel = np.nonzero(fg_mask[b.indices])[0]
        att_sel.append(sel)
        bmask = np.zeros((sel.size, scene.class_count))
        if sel.size:
            bmask[np.arange(sel.size), box_class[b.indices[sel]]] = 1.0
        att_mask.append(bmask)
        refresh_rows.append(
            np.array([j for j, i in enumerate(b.indices) if int(i) in refresh_set], dtype=np.int64)
        )

    history: list[float] = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * (cfg.lr_decay**epoch)
        total = 0.0
        for b, sel, bmask in zip(batches, att_sel, att_mask):
            cache = net.forward(b.x, b.neighbors)
            l_ce, dz, _ = segmentation_ce(cache.probs, labels.classes[b.indices])
            l_a = 0.0
            if cfg.attention and cfg.alpha > 0 and sel.size:
                l_a, dz_a = attention_ce(
                    cache.attention[sel],
                    cache.probs[sel],
                    bmask,
                    flow_through_attention=not cfg.stop_grad_attention,
                )
                dz[sel] += cfg.alpha * dz_a
            grads = net.backward(cache, dz, None)
            net.sgd_step(grads, lr)
            total += combined_loss(l_ce, l_a, cfg.alpha)
        history.append(total / len(batches))

        if cfg.pseudo_labeling and refresh_idx.size and (epoch + 1) % cfg.refresh_every == 0:
            _refresh_ambiguous(net, batches, refresh_rows, labels, candidates_by_point, cfg)

    return TrainResult(net=net, labels=labels, loss_history=history)


def _refresh_ambiguous(
    net: PointNetLite,
    batches: list[SubcloudBatch],
    refresh_rows: list[np.ndarray],
    labels: PseudoLabelMap,
    candidates_by_point: dict[int, tuple[int, ...]],
    cfg: TrainConfig,
) -> None:
    """Replace all previous self-training entries with freshly gated ones."""
    for b, rows in zip(batches, refresh_rows):
        for j in rows:
            labels.clear_label(int(b.indices[j]))
    for b, rows in zip(batches, refresh_rows):
        if rows.size == 0:
            continue
        cache = net.forward(b.x, b.neighbors)
        probs = cache.probs[rows]
        cand = [candidates_by_point[int(b.indices[j])] for j in rows]
        accept, classes, confs = pseudo_label_ambiguous(probs, cand, cfg.confidence_threshold)
        for j, ok, cls, cf in zip(rows, accept, classes, confs):
            if ok:
                labels.set_label(int(b.indices[j]), int(cls), float(cf), PROV_AST_PL)


def predict_labels(net: PointNetLite, scene: Scene, cfg: TrainConfig) -> np.ndarray:
    """Per-point argmax class prediction, (N,) int64; ties go to the lower class."""
    out = np.zeros(scene.num_points, dtype=np.int64)
    for b in subcloud_batches(scene, cfg.context, cfg.context_k, cfg.batch_points):
        cache = net.forward(b.x, b.neighbors)
        out[b.indices] = np.argmax(cache.probs, axis=1)
    return out
