"""Tri-partition of scene points by box membership.

Every point lands in exactly one category: inside exactly one box
(potential foreground), inside two or more (ambiguous), or inside none
(background). Membership is defined by the boundary-inclusive containment
test; the grid acceleration below is an implementation detail whose output
must equal the brute-force definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import Scene, points_in_box

FOREGROUND = 1  # inside exactly one box
AMBIGUOUS = 2  # inside two or more boxes
BACKGROUND = 0  # inside no box

CATEGORY_NAMES = {FOREGROUND: "PotentialForeground", AMBIGUOUS: "Ambiguous", BACKGROUND: "Background"}


@dataclass
class PartitionMap:
    """Per-point category plus the indices of the boxes containing each point."""

    category: np.ndarray  # (N,) int8
    member_boxes: list[tuple[int, ...]]

    def __post_init__(self) -> None:
        self.category = np.asarray(self.category, dtype=np.int8).reshape(-1)
        if len(self.member_boxes) != self.category.shape[0]:
            raise ValueError("member box list length mismatch")

    @property
    def num_points(self) -> int:
        return int(self.category.shape[0])

    def counts(self) -> dict[str, int]:
        return {
            name: int(np.count_nonzero(self.category == cat))
            for cat, name in CATEGORY_NAMES.items()
        }

    def indices(self, category: int) -> np.ndarray:
        return np.nonzero(self.category == category)[0]


def _categorize(membership: list[list[int]]) -> PartitionMap:
    n = len(membership)
    category = np.empty(n, dtype=np.int8)
    members: list[tuple[int, ...]] = []
    for i, boxes in enumerate(membership):
        k = len(boxes)
        category[i] = FOREGROUND if k == 1 else (AMBIGUOUS if k >= 2 else BACKGROUND)
        members.append(tuple(boxes))
    return PartitionMap(category, members)


def partition_points_bruteforce(scene: Scene) -> PartitionMap:
    """O(N*B) reference implementation; the definition the grid version must match."""
    n = scene.num_points
    membership: list[list[int]] = [[] for _ in range(n)]
    for b_idx, box in enumerate(scene.boxes):
        inside = np.nonzero(points_in_box(scene.xyz, box))[0]
        for i in inside:
            membership[i].append(b_idx)
    return _categorize(membership)


def partition_points(scene: Scene) -> PartitionMap:
    """Tri-partition via a uniform grid over box extents; equals brute force exactly."""
    n = scene.num_points
    if not scene.boxes or n == 0:
        return _categorize([[] for _ in range(n)])

    sizes = np.array([box.size for box in scene.boxes], dtype=np.float64)
    cell = float(np.median(sizes[sizes > 0])) if np.any(sizes > 0) else 1.0
    cell = max(cell, 1e-9)
    origin = scene.xyz.min(axis=0)

    # Map each box to the grid cells its AABB overlaps.
    grid: dict[tuple[int, int, int], list[int]] = {}
    for b_idx, box in enumerate(scene.boxes):
        lo = np.floor((np.asarray(box.min_corner) - origin) / cell).astype(np.int64)
        hi = np.floor((np.asarray(box.max_corner) - origin) / cell).astype(np.int64)
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    grid.setdefault((i, j, k), []).append(b_idx)

    keys = np.floor((scene.xyz - origin) / cell).astype(np.int64)
    membership: list[list[int]] = []
    mins = np.array([b.min_corner for b in scene.boxes])
    maxs = np.array([b.max_corner for b in scene.boxes])
    for i in range(n):
        cand = grid.get((keys[i, 0], keys[i, 1], keys[i, 2]))
        if not cand:
            membership.append([])
            continue
        p = scene.xyz[i]
        hits = [
            b
            for b in cand
            if (mins[b] <= p).all() and (p <= maxs[b]).all()
        ]
        membership.append(hits)
    return _categorize(membership)


def write_partition_csv(pm: PartitionMap, stream) -> None:
    """CSV export: point_index,category,member_box_indices (';'-joined)."""
    stream.write("point_index,category,member_box_indices\n")
    for i in range(pm.num_points):
        boxes = ";".join(str(b) for b in pm.member_boxes[i])
        stream.write("%d,%s,%s\n" % (i, CATEGORY_NAMES[int(pm.category[i])], boxes))
