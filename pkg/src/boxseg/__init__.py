"""boxseg: dense pseudo labels for 3D point clouds from box annotations and
subcloud tags, plus a small segmentation model trained on them."""

from .scene import (
    BoundingBox,
    PseudoLabelMap,
    Scene,
    SceneFormatError,
    SceneInvariantError,
    Subcloud,
    UNLABELED,
    load_labels,
    load_scene,
    parse_labels,
    parse_scene,
    point_in_box,
    save_labels,
    save_scene,
    serialize_labels,
    serialize_scene,
)
from .partition import PartitionMap, partition_points, partition_points_bruteforce
from .voxel import VoxelGrid, voxelize
from .slic import SuperpointSeg, slic_superpoints
from .gmm import GMM, fit_gmm
from .mincut import FG, BG, SuperpointGraph, cut_cost, min_cut
from .grabcut import GrabCutParams, grabcut_box, grabcut_scene
from .net import PointNetLite, knn_indices, sigmoid_ce_loss
from .config import TrainConfig
from .pcam import (
    background_pseudo_labels,
    compute_pcam,
    refine_per_subcloud,
    refine_top_fraction,
    train_classifier,
)
from .selftrain import (
    attention_loss,
    combined_loss,
    predict_labels,
    pseudo_label_ambiguous,
    train_segmentation,
)
from .bench import ConfusionMatrix, PerturbSpec, confusion_from_labels, label_quality, miou, perturb_boxes
from .synth import SynthSpec, generate_synthetic_scene, heldout_spec
from .report import evaluate_labels, write_report
from .pipeline import PipelineConfig, paper_preset, run_pipeline

__version__ = "0.1.0"
