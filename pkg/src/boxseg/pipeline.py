"""End-to-end orchestration: partition, foreground labels, background labels,
refinement, self-training, and evaluation, with every intermediate persisted.

Stages run sequentially; each failure is rewrapped with the stage name so a
broken run points at the responsible step. A manifest records the config
hash, seed, and per-stage wall time (the manifest is the one output that is
not byte-stable across runs; every other artifact is deterministic given the
config and seed).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .bench import PerturbSpec, label_quality, perturb_boxes
from .config import TrainConfig, dataclass_from_dict, load_toml
from .grabcut import GrabCutParams, grabcut_scene
from .partition import FOREGROUND, partition_points, write_partition_csv
from .pcam import background_pseudo_labels, compute_pcam, refine_top_fraction, train_classifier
from .report import evaluate_labels, write_report
from .scene import (
    PROV_BOX_PRIOR,
    PseudoLabelMap,
    Scene,
    save_labels,
)
from .selftrain import predict_labels, train_segmentation


class PipelineError(RuntimeError):
    """A stage failure, carrying the stage name in the message."""


@dataclass
class PipelineConfig:
    mode: str = "ast"  # foreground initializer: "ast" (box priors) or "grabcut"
    seed: int = 0
    classifier_epochs: int = 30
    classifier_batch_points: int = 2048  # tags describe whole bands, so train on big windows
    use_refinement: bool = True
    figures: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    grabcut: GrabCutParams = field(default_factory=GrabCutParams)
    perturb: Optional[PerturbSpec] = None

    def validate(self) -> None:
        if self.mode not in ("ast", "grabcut"):
            raise ValueError("mode must be 'ast' or 'grabcut'")
        if self.classifier_epochs < 0:
            raise ValueError("classifier epoch count must be nonnegative")
        self.train.validate()
        self.grabcut.validate()
        if self.perturb is not None:
            self.perturb.validate()

    def resolved(self) -> "PipelineConfig":
        """Copy with the global seed pushed into every stage config."""
        return replace(
            self,
            train=replace(self.train, seed=self.seed),
            grabcut=replace(self.grabcut, seed=self.seed),
        )

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if self.perturb is None:
            out.pop("perturb")
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def paper_preset(seed: int = 0) -> PipelineConfig:
    """Working default preset: attention-based self-training with box priors,
    lr 0.01 decayed 5%/epoch, attention weight 0.001, confidence gate 0.8,
    top-20% background refinement."""
    return PipelineConfig(
        mode="ast",
        seed=seed,
        train=TrainConfig(
            learning_rate=0.01,
            lr_decay=0.95,
            alpha=0.001,
            confidence_threshold=0.8,
            refine_fraction=0.2,
            seed=seed,
        ),
    )


def config_from_toml(path, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Pipeline config from a TOML file with [pipeline]/[train]/[grabcut]/[perturb] sections."""
    data = load_toml(path)
    cfg = base if base is not None else PipelineConfig()
    train = dataclass_from_dict(TrainConfig, {**dataclasses.asdict(cfg.train), **data.get("train", {})}, "train")
    grab_base = dataclasses.asdict(cfg.grabcut)
    grabcut = dataclass_from_dict(GrabCutParams, {**grab_base, **data.get("grabcut", {})}, "grabcut")
    perturb = cfg.perturb
    if "perturb" in data:
        pdata = dict(data["perturb"])
        if isinstance(pdata.get("magnitude"), list):
            pdata["magnitude"] = tuple(pdata["magnitude"])
        perturb = dataclass_from_dict(PerturbSpec, pdata, "perturb")
    pipe = dict(data.get("pipeline", {}))
    known = {
        "mode",
        "seed",
        "classifier_epochs",
        "classifier_batch_points",
        "use_refinement",
        "figures",
    }
    unknown = set(pipe) - known
    if unknown:
        raise ValueError("unknown pipeline config keys: %s" % ", ".join(sorted(unknown)))
    return PipelineConfig(
        mode=pipe.get("mode", cfg.mode),
        seed=pipe.get("seed", cfg.seed),
        classifier_epochs=pipe.get("classifier_epochs", cfg.classifier_epochs),
        classifier_batch_points=pipe.get("classifier_batch_points", cfg.classifier_batch_points),
        use_refinement=pipe.get("use_refinement", cfg.use_refinement),
        figures=pipe.get("figures", cfg.figures),
        train=train,
        grabcut=grabcut,
        perturb=perturb,
    )


def box_prior_labels(scene: Scene, part) -> PseudoLabelMap:
    """Naive foreground initialization: unique-box points take their box's class."""
    labels = PseudoLabelMap.empty(scene.num_points)
    for i in np.nonzero(part.category == FOREGROUND)[0]:
        cls = scene.boxes[part.member_boxes[i][0]].class_id
        labels.set_label(int(i), cls, 1.0, PROV_BOX_PRIOR)
    return labels


def merge_labels(primary: PseudoLabelMap, secondary: PseudoLabelMap) -> PseudoLabelMap:
    """Union of two label maps; the primary wins where both label a point."""
    out = secondary.copy()
    mask = primary.labeled_mask
    out.classes[mask] = primary.classes[mask]
    out.confidence[mask] = primary.confidence[mask]
    out.provenance[mask] = primary.provenance[mask]
    return out


def run_pipeline(
    scene: Scene,
    cfg: PipelineConfig,
    out_dir,
    eval_scene: Optional[Scene] = None,
) -> dict:
    """Run every stage, persist all artifacts under out_dir, return a summary."""
    cfg.validate()
    cfg = cfg.resolved()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    summary: dict = {"out_dir": str(out), "config_hash": cfg.config_hash(), "seed": cfg.seed}

    def stage(name: str, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            raise PipelineError("stage %s: %s" % (name, exc)) from exc
        timings[name] = time.perf_counter() - t0
        return result

    if cfg.perturb is not None:
        def _perturb():
            boxes = perturb_boxes(scene.boxes, cfg.perturb)
            return Scene(
                xyz=scene.xyz,
                boxes=boxes,
                subclouds=scene.subclouds,
                class_count=scene.class_count,
                rgb=scene.rgb,
                background_class_ids=scene.background_class_ids,
                gt_labels=scene.gt_labels,
            )
        scene = stage("perturb", _perturb)

    part = stage("partition", lambda: partition_points(scene))
    with open(out / "partition.csv", "w", encoding="utf-8") as f:
        write_partition_csv(part, f)

    if cfg.mode == "grabcut":
        fg = stage("foreground", lambda: grabcut_scene(scene, part, cfg.grabcut))
    else:
        fg = stage("foreground", lambda: box_prior_labels(scene, part))
    save_labels(fg, out / "labels_foreground.txt")

    cls_cfg = replace(
        cfg.train, epochs=cfg.classifier_epochs, batch_points=cfg.classifier_batch_points
    )
    classifier, _cls_hist = stage("classifier", lambda: train_classifier(scene, cls_cfg))
    with open(out / "classifier.net", "w", encoding="utf-8") as f:
        classifier.save(f)

    field_ = stage("pcam", lambda: compute_pcam(classifier, scene, part, cls_cfg))
    bg = background_pseudo_labels(field_, scene.num_points)
    save_labels(bg, out / "labels_pcam.txt")

    if cfg.use_refinement:
        bg_final = stage("refine", lambda: refine_top_fraction(bg, cfg.train.refine_fraction))
    else:
        bg_final = bg
    save_labels(bg_final, out / "labels_refined.txt")

    initial = merge_labels(fg, bg_final)
    result = stage("selftrain", lambda: train_segmentation(scene, part, initial, cfg.train))
    with open(out / "model.net", "w", encoding="utf-8") as f:
        result.net.save(f)
    save_labels(result.labels, out / "labels_final.txt")

    pred = stage("predict", lambda: predict_labels(result.net, scene, cfg.train))
    pred_map = PseudoLabelMap.empty(scene.num_points)
    pred_map.classes[:] = pred
    pred_map.confidence[:] = 1.0
    save_labels(pred_map, out / "predictions.txt")

    if scene.gt_labels is not None:
        report = stage("eval", lambda: evaluate_labels(scene, pred))
        write_report(report, out, "report", figures=cfg.figures)
        summary["report"] = report
        quality = label_quality(result.labels, scene.gt_labels)
        with open(out / "pseudo_quality.json", "w", encoding="utf-8") as f:
            json.dump(quality, f, indent=2, sort_keys=True)
            f.write("\n")
        summary["pseudo_quality"] = quality

    if eval_scene is not None:
        def _heldout():
            pred_h = predict_labels(result.net, eval_scene, cfg.train)
            return evaluate_labels(eval_scene, pred_h)
        heldout = stage("eval_heldout", _heldout)
        write_report(heldout, out, "heldout_report", figures=cfg.figures)
        summary["heldout_report"] = heldout

    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "stage_seconds": timings,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    summary["timings"] = timings
    return summary
