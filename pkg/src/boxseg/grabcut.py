"""Unsupervised foreground/background separation inside a bounding box.

Per box: voxelize the contained points, oversegment the voxels into
superpoints, build a 6-adjacency superpoint graph with contrast-sensitive
Potts weights, seed foreground from the box core and background from the
boundary shell, then alternate GMM appearance fitting and exact min-cut a few
rounds. Superpoint labels are finally projected back onto the raw points.

Seeds are soft: each round refits both mixtures on the current assignment.
The single hard rule is the fallback that keeps at least one superpoint
foreground (the initial core) when a cut would empty the foreground.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .gmm import fit_gmm
from .mincut import FG, SuperpointGraph, min_cut
from .partition import FOREGROUND, PartitionMap
from .scene import (
    PROV_GRABCUT,
    BoundingBox,
    PseudoLabelMap,
    Scene,
    points_in_box,
)
from .slic import slic_superpoints
from .voxel import voxelize

ENERGY_CLAMP = 1e6


@dataclass(frozen=True)
class GrabCutParams:
    """Knobs of the per-box separation; defaults follow standard GrabCut practice."""

    voxel_size: float = 0.05
    superpoint_target: int = 0  # 0 = auto: max(8, occupied voxels / 64)
    compactness: float = 0.5
    gmm_components: int = 3
    lambda_pair: float = 1.0
    beta_scale: float = 0.5
    outer_iters: int = 5
    slic_iters: int = 10
    core_shrink: float = 0.25
    use_color: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.voxel_size <= 0:
            raise ValueError("voxel size must be positive")
        if self.gmm_components < 1:
            raise ValueError("gmm component count must be >= 1")
        if self.lambda_pair < 0 or self.beta_scale < 0:
            raise ValueError("pairwise weights must be nonnegative")
        if not (0 < self.core_shrink < 1):
            raise ValueError("core shrink fraction must be in (0, 1)")
        if self.outer_iters < 1:
            raise ValueError("need at least one outer iteration")


def _superpoint_adjacency(grid, seg) -> np.ndarray:
    """Undirected superpoint edges from 6-adjacent occupied voxels."""
    index = grid.key_index()
    pairs = set()
    for v, key in enumerate(grid.keys):
        sp_v = seg.voxel_superpoint[v]
        for axis in range(3):
            nb = (
                key[0] + (axis == 0),
                key[1] + (axis == 1),
                key[2] + (axis == 2),
            )
            u = index.get(nb)
            if u is None:
                continue
            sp_u = seg.voxel_superpoint[u]
            if sp_u != sp_v:
                pairs.add((min(sp_u, sp_v), max(sp_u, sp_v)))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(pairs), dtype=np.int64)


def _fit_side(features: np.ndarray, k: int, seed_parts: tuple[int, ...]) -> "object":
    k_eff = min(k, features.shape[0])
    rng = np.random.default_rng(list(seed_parts))
    return fit_gmm(features, k_eff, max_iters=30, seed=rng)


def grabcut_box(
    xyz: np.ndarray,
    box: BoundingBox,
    params: GrabCutParams,
    rgb: np.ndarray | None = None,
    box_index: int = 0,
) -> np.ndarray:
    """Foreground mask over the given points (all assumed inside the box)."""
    params.validate()
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    if xyz.shape[0] == 0:
        raise ValueError("box contains no points")

    grid = voxelize(xyz, params.voxel_size, rgb if params.use_color else None)
    target = params.superpoint_target
    if target <= 0:
        target = max(8, grid.num_voxels // 64)
    target = min(max(target, 1), grid.num_voxels)
    seg = slic_superpoints(grid, target, params.compactness, params.slic_iters)
    n_sp = seg.num_superpoints

    # Work in box-local coordinates so the result only depends on relative geometry.
    feats = seg.features.copy()
    feats[:, :3] -= grid.origin[None, :]

    core = box.shrunk(params.core_shrink)
    sp_xyz = seg.features[:, :3]
    in_core = points_in_box(sp_xyz, core)
    if not np.any(in_core):
        # Degenerate seed: fall back to the superpoint nearest the box center.
        d = np.linalg.norm(sp_xyz - box.center[None, :], axis=1)
        in_core = np.zeros(n_sp, dtype=bool)
        in_core[int(np.argmin(d))] = True
    if np.all(in_core):
        # No boundary shell to seed background from: everything stays foreground.
        return np.ones(xyz.shape[0], dtype=bool)

    edges = _superpoint_adjacency(grid, seg)
    if edges.shape[0]:
        d2 = np.sum((feats[edges[:, 0]] - feats[edges[:, 1]]) ** 2, axis=1)
        mean_d2 = float(d2.mean())
        beta = params.beta_scale / mean_d2 if mean_d2 > 0 else 0.0
        weights = params.lambda_pair * np.exp(-beta * d2)
    else:
        weights = np.zeros(0)

    assign = in_core.copy()  # True = foreground
    initial = in_core.copy()
    for outer in range(params.outer_iters):
        fg_feats = feats[assign]
        bg_feats = feats[~assign]
        if fg_feats.shape[0] == 0 or bg_feats.shape[0] == 0:
            break
        gmm_fg = _fit_side(fg_feats, params.gmm_components, (params.seed, box_index, outer, 0))
        gmm_bg = _fit_side(bg_feats, params.gmm_components, (params.seed, box_index, outer, 1))
        e_fg = np.clip(-gmm_fg.log_density(feats), -ENERGY_CLAMP, ENERGY_CLAMP)
        e_bg = np.clip(-gmm_bg.log_density(feats), -ENERGY_CLAMP, ENERGY_CLAMP)
        graph = SuperpointGraph(e_fg=e_fg, e_bg=e_bg, edges=edges, weights=weights)
        labels = min_cut(graph)
        assign = labels == FG
        if not np.any(assign):
            assign = initial.copy()
            break

    if not np.any(assign):
        assign = initial.copy()
    point_sp = seg.point_superpoint(grid)
    return assign[point_sp]


def grabcut_scene(
    scene: Scene,
    part: PartitionMap,
    params: GrabCutParams,
    max_workers: int | None = None,
) -> PseudoLabelMap:
    """Run grabcut per box and label surviving unique-box points with the box class.

    Ambiguous points are left unlabeled (separation inside overlapping boxes is
    undefined here); boxes run in parallel and results merge by box index, so
    the output does not depend on thread count.
    """
    labels = PseudoLabelMap.empty(scene.num_points)
    jobs = []
    for b_idx, box in enumerate(scene.boxes):
        inside = np.nonzero(points_in_box(scene.xyz, box))[0]
        if inside.size == 0:
            continue
        jobs.append((b_idx, box, inside))

    if max_workers is None:
        max_workers = threads_from_env()

    def run(job):
        b_idx, box, inside = job
        rgb = scene.rgb[inside] if scene.rgb is not None else None
        mask = grabcut_box(scene.xyz[inside], box, params, rgb=rgb, box_index=b_idx)
        return b_idx, inside, mask

    if max_workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    for b_idx, inside, mask in results:
        box_cls = scene.boxes[b_idx].class_id
        for local, point in enumerate(inside):
            if not mask[local]:
                continue
            if part.category[point] != FOREGROUND:
                continue  # ambiguous or mis-indexed points stay unlabeled
            labels.set_label(int(point), box_cls, 1.0, PROV_GRABCUT)
    return labels


def threads_from_env(default: int | None = None) -> int:
    """Worker cap from BOXSEG_THREADS; defaults to the machine's core count."""
    raw = os.environ.get("BOXSEG_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    if default is not None:
        return default
    return max(1, os.cpu_count() or 1)
