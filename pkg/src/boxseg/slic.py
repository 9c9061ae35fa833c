"""SLIC-style oversegmentation of a voxel grid into geometrically homogeneous superpoints.

Alternating assignment/update clustering in a joint space of voxel centroid
position (scaled by the expected cluster radius S) and mean color (weighted by
the compactness factor). Seeds sit on a regular lattice of pitch S, each
snapped to the nearest occupied voxel, then padded or trimmed to the requested
cluster count so degenerate targets (1 cluster, one cluster per voxel) behave
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .voxel import VoxelGrid


@dataclass
class SuperpointSeg:
    """Partition of occupied voxels into superpoints."""

    voxel_superpoint: np.ndarray  # (V,) int64, superpoint id per voxel
    features: np.ndarray  # (K, 3) centroid xyz or (K, 6) with mean color
    members: list[np.ndarray]  # voxel indices per superpoint

    @property
    def num_superpoints(self) -> int:
        return int(self.features.shape[0])

    def point_superpoint(self, grid: VoxelGrid) -> np.ndarray:
        """Superpoint id per original point, via the point -> voxel map."""
        return self.voxel_superpoint[grid.point_voxel]


def _seed_voxels(centroids: np.ndarray, target: int, spacing: float) -> np.ndarray:
    """Lattice-snapped seed voxel indices, padded/trimmed to exactly `target`."""
    v = centroids.shape[0]
    lo = centroids.min(axis=0)
    hi = centroids.max(axis=0)
    steps = np.maximum(1, np.floor((hi - lo) / spacing).astype(np.int64) + 1)

    seeds: list[int] = []
    taken = np.zeros(v, dtype=bool)
    for i in range(steps[0]):
        for j in range(steps[1]):
            for k in range(steps[2]):
                c = lo + (np.array([i, j, k], dtype=np.float64) + 0.5) * spacing
                d2 = np.sum((centroids - c) ** 2, axis=1)
                best = int(np.argmin(d2))
                if not taken[best]:
                    taken[best] = True
                    seeds.append(best)
                if len(seeds) == target:
                    return np.array(seeds, dtype=np.int64)

    # Pad with farthest-point selection until the target count is reached.
    while len(seeds) < target:
        d2 = np.full(v, np.inf)
        for s in seeds:
            d2 = np.minimum(d2, np.sum((centroids - centroids[s]) ** 2, axis=1))
        d2[taken] = -1.0
        best = int(np.argmax(d2))
        taken[best] = True
        seeds.append(best)
    return np.array(seeds, dtype=np.int64)


def slic_superpoints(
    grid: VoxelGrid,
    target_count: int,
    compactness: float = 0.5,
    max_iters: int = 10,
) -> SuperpointSeg:
    """Cluster occupied voxels into approximately `target_count` superpoints.

    Distance between a voxel and a cluster center is
    ||xyz - c_xyz|| / S + compactness * ||color - c_color||, with
    S = (bounding volume / target_count)^(1/3). Terminates on zero
    reassignments or after max_iters sweeps; empty clusters are dropped.
    """
    v = grid.num_voxels
    if not (1 <= target_count <= v):
        raise ValueError("superpoint target must be in [1, %d]" % v)

    xyz = grid.centroids
    color = grid.mean_colors
    extent = np.maximum(xyz.max(axis=0) - xyz.min(axis=0), grid.voxel_size)
    spacing = float(np.cbrt(np.prod(extent) / target_count))
    spacing = max(spacing, 1e-12)

    seeds = _seed_voxels(xyz, target_count, spacing)
    c_xyz = xyz[seeds].copy()
    c_col = color[seeds].copy() if color is not None else None

    assign = np.full(v, -1, dtype=np.int64)
    for _ in range(max_iters):
        d = np.linalg.norm(xyz[:, None, :] - c_xyz[None, :, :], axis=2) / spacing
        if color is not None and compactness > 0:
            d = d + compactness * np.linalg.norm(
                color[:, None, :] - c_col[None, :, :], axis=2
            )
        new_assign = np.argmin(d, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(len(seeds)):
            mask = assign == c
            if np.any(mask):
                c_xyz[c] = xyz[mask].mean(axis=0)
                if c_col is not None:
                    c_col[c] = color[mask].mean(axis=0)

    # Compact ids, dropping clusters that ended up empty.
    used = np.unique(assign)
    remap = {int(old): new for new, old in enumerate(used)}
    voxel_sp = np.array([remap[int(a)] for a in assign], dtype=np.int64)
    members = [np.nonzero(voxel_sp == c)[0] for c in range(len(used))]
    feats = np.stack([xyz[m].mean(axis=0) for m in members])
    if color is not None:
        feats = np.concatenate(
            [feats, np.stack([color[m].mean(axis=0) for m in members])], axis=1
        )
    return SuperpointSeg(voxel_superpoint=voxel_sp, features=feats, members=members)
