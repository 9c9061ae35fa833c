"""Command-line interface wiring the pipeline stages together.

Subcommands: synth, partition, grabcut, pcam-train, pcam-label, ast-train,
eval, perturb, pipeline. Config files are TOML; flags override file values.
The BOXSEG_THREADS environment variable caps intra-stage parallelism.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bench import PerturbSpec, perturb_boxes
from .config import TrainConfig, dataclass_from_dict, load_toml
from .grabcut import GrabCutParams, grabcut_scene, threads_from_env
from .partition import partition_points, write_partition_csv
from .pcam import background_pseudo_labels, compute_pcam, refine_top_fraction, train_classifier
from .pipeline import PipelineConfig, PipelineError, config_from_toml, paper_preset, run_pipeline
from .report import evaluate_labels, write_report
from .scene import (
    Scene,
    load_labels,
    load_scene,
    save_labels,
    save_scene,
)
from .selftrain import train_segmentation
from .synth import SynthSpec, generate_synthetic_scene
from .net import PointNetLite


def _train_cfg_from_args(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "cfg", None):
        data = load_toml(args.cfg)
        cfg = dataclass_from_dict(TrainConfig, {**dataclasses.asdict(cfg), **data.get("train", {})}, "train")
    for name in ("epochs", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            cfg = replace(cfg, **{name: v})
    return cfg


def _cmd_synth(args) -> int:
    spec = SynthSpec()
    if args.spec:
        data = load_toml(args.spec)
        spec = dataclass_from_dict(SynthSpec, {**dataclasses.asdict(spec), **data.get("synth", data)}, "synth")
    overrides = {}
    for name in ("rooms", "objects_per_room", "classes", "noise_sigma", "seed", "box_dilation"):
        v = getattr(args, name.replace("-", "_"), None)
        if v is not None:
            overrides[name] = v
    if overrides:
        spec = replace(spec, **overrides)
    scene = generate_synthetic_scene(spec)
    save_scene(scene, args.out)
    print("wrote %s: %d points, %d boxes, %d subclouds, %d classes"
          % (args.out, scene.num_points, len(scene.boxes), len(scene.subclouds), scene.class_count))
    return 0


def _cmd_partition(args) -> int:
    scene = load_scene(args.scene)
    pm = partition_points(scene)
    with open(args.out, "w", encoding="utf-8") as f:
        write_partition_csv(pm, f)
    print("wrote %s: %s" % (args.out, pm.counts()))
    return 0


def _cmd_grabcut(args) -> int:
    scene = load_scene(args.scene)
    pm = partition_points(scene)
    params = GrabCutParams(
        voxel_size=args.voxel_size,
        superpoint_target=args.k_sp,
        gmm_components=args.k_gmm,
        lambda_pair=getattr(args, "lambda"),
        beta_scale=args.beta_scale,
        outer_iters=args.outer,
        seed=args.seed,
    )
    labels = grabcut_scene(scene, pm, params, max_workers=threads_from_env())
    save_labels(labels, args.out)
    print("wrote %s: %d/%d points labeled" % (args.out, int(labels.labeled_mask.sum()), scene.num_points))
    return 0


def _cmd_pcam_train(args) -> int:
    scene = load_scene(args.scene)
    cfg = _train_cfg_from_args(args)
    net, history = train_classifier(scene, cfg)
    with open(args.out, "w", encoding="utf-8") as f:
        net.save(f)
    last = history[-1] if history else float("nan")
    print("wrote %s after %d epochs (final loss %.4f)" % (args.out, len(history), last))
    return 0


def _cmd_pcam_label(args) -> int:
    scene = load_scene(args.scene)
    with open(args.checkpoint, "r", encoding="utf-8") as f:
        net = PointNetLite.load(f)
    cfg = _train_cfg_from_args(args)
    if args.no_restrict_bg:
        cfg = replace(cfg, restrict_bg_classes=False)
    pm = partition_points(scene)
    field = compute_pcam(net, scene, pm, cfg)
    labels = background_pseudo_labels(field, scene.num_points)
    if not args.raw:
        labels = refine_top_fraction(labels, args.fraction)
    save_labels(labels, args.out)
    print("wrote %s: %d/%d points labeled" % (args.out, int(labels.labeled_mask.sum()), scene.num_points))
    return 0


def _cmd_ast_train(args) -> int:
    from .pipeline import box_prior_labels, merge_labels

    scene = load_scene(args.scene)
    cfg = _train_cfg_from_args(args)
    pm = partition_points(scene)
    if args.fg_init == "grabcut":
        params = replace(GrabCutParams(), seed=cfg.seed)
        fg = grabcut_scene(scene, pm, params, max_workers=threads_from_env())
    else:
        fg = box_prior_labels(scene, pm)
    if args.bg_labels:
        initial = merge_labels(fg, load_labels(args.bg_labels))
    else:
        initial = fg
    result = train_segmentation(scene, pm, initial, cfg)
    with open(args.out_model, "w", encoding="utf-8") as f:
        result.net.save(f)
    save_labels(result.labels, args.out_labels)
    last = result.loss_history[-1] if result.loss_history else float("nan")
    print("wrote %s and %s after %d epochs (final loss %.4f)"
          % (args.out_model, args.out_labels, len(result.loss_history), last))
    return 0


def _cmd_eval(args) -> int:
    scene = load_scene(args.scene)
    labels = load_labels(args.labels)
    if len(labels) != scene.num_points:
        raise SystemExit("label file covers %d points, scene has %d" % (len(labels), scene.num_points))
    report = evaluate_labels(scene, labels)
    if args.out:
        artifacts = write_report(report, Path(args.out).parent or Path("."),
                                 Path(args.out).stem, figures=not args.no_figures)
        print("wrote %s" % ", ".join(sorted(artifacts.values())))
    if args.report == "json":
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print("metric,class,value")
        print("miou,,%r" % report["miou"])
        print("labeled_fraction,,%r" % report["labeled_fraction"])
        for c, iou in enumerate(report["per_class_iou"]):
            print("iou,%d,%s" % (c, "" if iou is None else repr(iou)))
    return 0


def _cmd_perturb(args) -> int:
    scene = load_scene(args.scene)
    magnitude = args.mag
    if args.mode == "scale" and args.scale_interval:
        magnitude = tuple(args.scale_interval)
    spec = PerturbSpec(mode=args.mode, magnitude=magnitude, seed=args.seed)
    boxes = perturb_boxes(scene.boxes, spec)
    out = Scene(
        xyz=scene.xyz,
        boxes=boxes,
        subclouds=scene.subclouds,
        class_count=scene.class_count,
        rgb=scene.rgb,
        background_class_ids=scene.background_class_ids,
        gt_labels=scene.gt_labels,
    )
    save_scene(out, args.out)
    print("wrote %s: %d -> %d boxes" % (args.out, len(scene.boxes), len(boxes)))
    return 0


def _cmd_pipeline(args) -> int:
    scene = load_scene(args.scene)
    if args.preset == "paper":
        cfg = paper_preset(seed=args.seed if args.seed is not None else 0)
    else:
        cfg = PipelineConfig()
    if args.cfg:
        cfg = config_from_toml(args.cfg, base=cfg)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.mode:
        cfg = replace(cfg, mode=args.mode)
    if args.no_refinement:
        cfg = replace(cfg, use_refinement=False)
    if args.no_figures:
        cfg = replace(cfg, figures=False)
    eval_scene = load_scene(args.eval_scene) if args.eval_scene else None
    summary = run_pipeline(scene, cfg, args.out_dir, eval_scene=eval_scene)
    if "report" in summary:
        print("miou %.4f (artifacts in %s)" % (summary["report"]["miou"], summary["out_dir"]))
    else:
        print("done (artifacts in %s)" % summary["out_dir"])
    if "heldout_report" in summary:
        print("held-out miou %.4f" % summary["heldout_report"]["miou"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boxseg",
                                description="Pseudo-label synthesis and segmentation training "
                                            "from box annotations and subcloud tags.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    sp.add_argument("--spec", help="TOML file with a [synth] section")
    sp.add_argument("--out", required=True)
    sp.add_argument("--rooms", type=int)
    sp.add_argument("--objects-per-room", dest="objects_per_room", type=int)
    sp.add_argument("--classes", type=int)
    sp.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    sp.add_argument("--box-dilation", dest="box_dilation", type=float)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=_cmd_synth)

    sp = sub.add_parser("partition", help="tri-partition points by box membership")
    sp.add_argument("scene")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_partition)

    sp = sub.add_parser("grabcut", help="per-box foreground separation")
    sp.add_argument("scene")
    sp.add_argument("--voxel-size", type=float, default=0.05)
    sp.add_argument("--k-sp", type=int, default=0)
    sp.add_argument("--k-gmm", type=int, default=3)
    sp.add_argument("--lambda", type=float, default=1.0)
    sp.add_argument("--beta-scale", type=float, default=0.5)
    sp.add_argument("--outer", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_grabcut)

    sp = sub.add_parser("pcam-train", help="train the subcloud-tag classifier")
    sp.add_argument("scene")
    sp.add_argument("--cfg", help="TOML file with a [train] section")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_pcam_train)

    sp = sub.add_parser("pcam-label", help="background pseudo labels from a trained classifier")
    sp.add_argument("scene")
    sp.add_argument("checkpoint")
    sp.add_argument("--cfg")
    sp.add_argument("--fraction", type=float, default=0.2)
    sp.add_argument("--raw", action="store_true", help="skip top-fraction refinement")
    sp.add_argument("--no-restrict-bg", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_pcam_label)

    sp = sub.add_parser("ast-train", help="self-training on merged pseudo labels")
    sp.add_argument("scene")
    sp.add_argument("--fg-init", choices=("box", "grabcut"), default="box")
    sp.add_argument("--bg-labels", help="label file with background pseudo labels to merge in")
    sp.add_argument("--cfg")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-model", required=True)
    sp.add_argument("--out-labels", required=True)
    sp.set_defaults(fn=_cmd_ast_train)

    sp = sub.add_parser("eval", help="evaluate a label file against scene ground truth")
    sp.add_argument("scene")
    sp.add_argument("labels")
    sp.add_argument("--report", choices=("json", "csv"), default="json")
    sp.add_argument("--out", help="base path for report files (figures land next to it)")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(fn=_cmd_eval)

    sp = sub.add_parser("perturb", help="corrupt bounding boxes")
    sp.add_argument("scene")
    sp.add_argument("--mode", choices=("translate", "scale", "discard"), required=True)
    sp.add_argument("--mag", type=float, default=0.1)
    sp.add_argument("--scale-interval", type=float, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_perturb)

    sp = sub.add_parser("pipeline", help="run all stages end to end")
    sp.add_argument("scene")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--preset", choices=("paper",))
    sp.add_argument("--cfg", help="TOML pipeline config")
    sp.add_argument("--mode", choices=("ast", "grabcut"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--eval-scene", help="held-out scene to evaluate the trained model on")
    sp.add_argument("--no-refinement", action="store_true")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(fn=_cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PipelineError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
