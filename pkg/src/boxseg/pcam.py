"""Background pseudo labels from subcloud tags via point class activation maps.

A point classifier is trained against subcloud-level class-presence tags with
a sigmoid cross-entropy on globally pooled features. The classification head
applied to the unpooled per-point features then gives a per-point, per-class
activation; masking by the subcloud's own tag and taking the argmax yields a
pseudo label for every point outside all boxes. A final refinement keeps only
the top fraction by confidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .inputs import subcloud_batches
from .net import PointNetLite, sigmoid_ce_loss
from .partition import BACKGROUND, PartitionMap
from .scene import PROV_PCAM, PROV_REFINED_PCAM, PseudoLabelMap, Scene


def train_classifier(
    scene: Scene, cfg: TrainConfig, net: PointNetLite | None = None
) -> tuple[PointNetLite, list[float]]:
    """Fit the tag classifier by SGD with per-epoch learning-rate decay.

    Returns the classifier and the per-epoch mean loss. Zero epochs returns
    the freshly initialized network untouched.
    """
    cfg.validate()
    batches = subcloud_batches(scene, cfg.context, cfg.context_k, cfg.batch_points)
    if not batches:
        raise ValueError("scene has no subcloud points to train on")
    for b in batches:
        if sum(b.subcloud.tag) == 0:
            raise ValueError("empty subcloud tag")
    if net is None:
        net = PointNetLite(
            classes=scene.class_count,
            in_dim=batches[0].x.shape[1],
            hidden=cfg.hidden,
            context=cfg.context,
            context_k=cfg.context_k,
            seed=cfg.seed,
        )
    history: list[float] = []
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        total = 0.0
        for b in batches:
            cache = net.forward(b.x, b.neighbors)
            loss, dlogits = sigmoid_ce_loss(cache.class_logits, b.subcloud.tag_array())
            grads = net.backward(cache, None, dlogits)
            net.sgd_step(grads, lr)
            total += loss
        history.append(total / len(batches))
        lr *= cfg.lr_decay
    return net, history


def predict_tags(net: PointNetLite, scene: Scene, cfg: TrainConfig) -> np.ndarray:
    """Per-subcloud predicted presence bits, (num_subclouds, C) in {0, 1}."""
    subclouds = scene.subclouds_or_whole()
    out = np.zeros((len(subclouds), scene.class_count), dtype=np.int64)
    batches = subcloud_batches(scene, cfg.context, cfg.context_k, cfg.batch_points)
    by_subcloud: dict[int, list] = {}
    for b in batches:
        by_subcloud.setdefault(subclouds.index(b.subcloud), []).append(b)
    for si, bs in by_subcloud.items():
        logits = np.mean([net.forward(b.x, b.neighbors).class_logits for b in bs], axis=0)
        out[si] = (logits > 0).astype(np.int64)
    return out


@dataclass
class PcamField:
    """Tag-masked class activations for background points."""

    indices: np.ndarray  # (Nb,) point indices
    activations: np.ndarray  # (Nb, C); zero wherever the subcloud tag is zero
    labels: np.ndarray  # (Nb,) argmax class over the candidate set
    confidence: np.ndarray  # (Nb,) candidate-softmax probability of the argmax


def compute_pcam(
    net: PointNetLite,
    scene: Scene,
    part: PartitionMap,
    cfg: TrainConfig,
) -> PcamField:
    """Class activations for every background point, masked by its subcloud tag.

    Candidate classes are the tagged ones, intersected with the scene's
    background classes when restrict_bg_classes is on and the scene declares
    any (boxes already explain the foreground classes). Ties in the argmax go
    to the lowest class id.
    """
    bg_mask = part.category == BACKGROUND
    idx_list: list[np.ndarray] = []
    act_list: list[np.ndarray] = []
    lab_list: list[np.ndarray] = []
    conf_list: list[np.ndarray] = []

    bg_ids = set(scene.background_class_ids)
    for b in subcloud_batches(scene, cfg.context, cfg.context_k, cfg.batch_points):
        sel = np.nonzero(bg_mask[b.indices])[0]
        if sel.size == 0:
            continue
        cache = net.forward(b.x, b.neighbors)
        tag = b.subcloud.tag_array()
        act = (cache.f_cam[sel] @ net.W_cls + net.b_cls) * tag[None, :]

        tagged = b.subcloud.tagged_classes()
        candidates = [c for c in tagged if c in bg_ids] if (cfg.restrict_bg_classes and bg_ids) else tagged
        if not candidates:
            candidates = tagged
        cand = np.array(candidates, dtype=np.int64)

        vals = act[:, cand]
        best = np.argmax(vals, axis=1)
        # Confidence: softmax over the candidate activations at the argmax.
        shifted = vals - vals.max(axis=1, keepdims=True)
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        idx_list.append(b.indices[sel])
        act_list.append(act)
        lab_list.append(cand[best])
        conf_list.append(p[np.arange(sel.size), best])

    if not idx_list:
        c = scene.class_count
        return PcamField(
            indices=np.zeros(0, dtype=np.int64),
            activations=np.zeros((0, c)),
            labels=np.zeros(0, dtype=np.int64),
            confidence=np.zeros(0),
        )
    return PcamField(
        indices=np.concatenate(idx_list),
        activations=np.concatenate(act_list, axis=0),
        labels=np.concatenate(lab_list),
        confidence=np.concatenate(conf_list),
    )


def background_pseudo_labels(field: PcamField, num_points: int) -> PseudoLabelMap:
    """Pseudo labels for every background point from the activation argmax."""
    labels = PseudoLabelMap.empty(num_points)
    labels.classes[field.indices] = field.labels
    labels.confidence[field.indices] = field.confidence
    labels.provenance[field.indices] = PROV_PCAM
    return labels


def refine_top_fraction(labels: PseudoLabelMap, fraction: float) -> PseudoLabelMap:
    """Keep exactly ceil(fraction * N) labeled entries with the highest confidence.

    Ties at the cutoff are broken toward the lower point index; every other
    point becomes unlabeled. Kept entries are retagged as refined.
    """
    if not (0 < fraction <= 1):
        raise ValueError("refine fraction must be in (0, 1]")
    out = PseudoLabelMap.empty(len(labels))
    labeled = np.nonzero(labels.labeled_mask)[0]
    n = labeled.size
    if n == 0:
        return out
    keep_n = int(np.ceil(fraction * n))
    order = np.lexsort((labeled, -labels.confidence[labeled]))
    keep = labeled[order[:keep_n]]
    out.classes[keep] = labels.classes[keep]
    out.confidence[keep] = labels.confidence[keep]
    out.provenance[keep] = PROV_REFINED_PCAM
    return out


def refine_per_subcloud(labels: PseudoLabelMap, fraction: float, scene: Scene) -> PseudoLabelMap:
    """Top-fraction refinement applied within each subcloud.

    The pipeline works subcloud by subcloud; ranking confidences globally
    instead would concentrate the kept labels in whichever rooms the
    classifier happens to find easiest and starve the rest.
    """
    out = PseudoLabelMap.empty(len(labels))
    for sc in scene.subclouds_or_whole():
        sub = PseudoLabelMap(
            labels.classes[sc.start : sc.end].copy(),
            labels.confidence[sc.start : sc.end].copy(),
            labels.provenance[sc.start : sc.end].copy(),
        )
        if not np.any(sub.labeled_mask):
            continue
        ref = refine_top_fraction(sub, fraction)
        out.classes[sc.start : sc.end] = ref.classes
        out.confidence[sc.start : sc.end] = ref.confidence
        out.provenance[sc.start : sc.end] = ref.provenance
    return out
