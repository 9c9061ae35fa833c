"""Voxelization of point sets onto a uniform grid anchored at the point minimum."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class VoxelGrid:
    """Occupied voxels of a point set.

    keys is (V, 3) int64 of occupied voxel indices in lexicographic order;
    point_voxel maps each input point to its row in keys; centroids/mean_colors
    are per-voxel member averages.
    """

    voxel_size: float
    origin: np.ndarray
    keys: np.ndarray
    point_voxel: np.ndarray
    centroids: np.ndarray
    mean_colors: Optional[np.ndarray]

    @property
    def num_voxels(self) -> int:
        return int(self.keys.shape[0])

    def members(self, voxel: int) -> np.ndarray:
        return np.nonzero(self.point_voxel == voxel)[0]

    def key_index(self) -> dict[tuple[int, int, int], int]:
        return {tuple(k): i for i, k in enumerate(self.keys)}


def voxelize(xyz: np.ndarray, voxel_size: float, rgb: Optional[np.ndarray] = None) -> VoxelGrid:
    """Partition points into cubic voxels of the given edge length.

    The grid origin is the componentwise minimum of the input, so the result
    depends only on relative point positions. Every point maps to exactly one
    voxel via floor((p - origin) / voxel_size).
    """
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    if xyz.shape[0] == 0:
        raise ValueError("cannot voxelize an empty point set")
    if voxel_size <= 0:
        raise ValueError("voxel size must be positive")
    origin = xyz.min(axis=0)
    idx3 = np.floor((xyz - origin) / voxel_size).astype(np.int64)
    keys, point_voxel = np.unique(idx3, axis=0, return_inverse=True)
    point_voxel = point_voxel.reshape(-1)

    v = keys.shape[0]
    counts = np.bincount(point_voxel, minlength=v).astype(np.float64)
    centroids = np.zeros((v, 3), dtype=np.float64)
    for d in range(3):
        centroids[:, d] = np.bincount(point_voxel, weights=xyz[:, d], minlength=v) / counts
    mean_colors = None
    if rgb is not None:
        rgb = np.asarray(rgb, dtype=np.float64).reshape(-1, 3)
        mean_colors = np.zeros((v, 3), dtype=np.float64)
        for d in range(3):
            mean_colors[:, d] = np.bincount(point_voxel, weights=rgb[:, d], minlength=v) / counts
    return VoxelGrid(
        voxel_size=float(voxel_size),
        origin=origin,
        keys=keys,
        point_voxel=point_voxel,
        centroids=centroids,
        mean_colors=mean_colors,
    )
