"""Synthetic indoor scenes with exact ground truth, boxes, and subcloud tags.

Rooms are laid out along the x axis: each has a noisy floor grid, optionally
four walls, and a few objects standing on the floor. Object instances cycle
through four shape archetypes per foreground class (low crate, tall pillar,
floating slab, L-bracket), so every class occupies a distinct geometric
envelope a small network can learn from coordinates alone. Boxes are the
exact axis-aligned hulls of each instance's noisy points, optionally dilated.

Subclouds are per-room height bands (below/above band_split). Bands vary in
which classes they contain — rooms without walls give floor-only bands, upper
bands of walled rooms are wall-dominated — which is exactly the tag variety
the background classifier needs.

Class ids: 0 = floor, 1 = wall (background); 2.. are foreground shapes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .scene import BoundingBox, Scene, Subcloud

FLOOR = 0
WALL = 1


@dataclass(frozen=True)
class SynthSpec:
    rooms: int = 5
    objects_per_room: int = 3
    classes: int = 4  # number of foreground classes
    noise_sigma: float = 0.01
    seed: int = 0
    room_size: float = 4.0
    room_gap: float = 2.0
    wall_height: float = 2.2
    floor_spacing: float = 0.11
    wall_spacing: float = 0.14
    object_spacing: float = 0.075
    wall_probability: float = 0.7
    box_dilation: float = 0.0
    band_split: float = 0.5

    def validate(self) -> None:
        if self.rooms < 1:
            raise ValueError("need at least one room")
        if self.objects_per_room < 0:
            raise ValueError("objects per room must be nonnegative")
        if self.classes < 1:
            raise ValueError("need at least one foreground class")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be nonnegative")
        for name in ("room_size", "wall_height", "floor_spacing", "wall_spacing", "object_spacing"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)

    @property
    def class_count(self) -> int:
        return self.classes + 2


def _grid2(rng_a: np.ndarray, rng_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.meshgrid(rng_a, rng_b, indexing="ij")
    return a.ravel(), b.ravel()


def _plane_xy(x0, x1, y0, y1, z, spacing) -> np.ndarray:
    xs = np.arange(x0, x1 + 1e-9, spacing)
    ys = np.arange(y0, y1 + 1e-9, spacing)
    gx, gy = _grid2(xs, ys)
    return np.column_stack([gx, gy, np.full(gx.size, z)])


def _plane_xz(x0, x1, z0, z1, y, spacing) -> np.ndarray:
    xs = np.arange(x0, x1 + 1e-9, spacing)
    zs = np.arange(z0, z1 + 1e-9, spacing)
    gx, gz = _grid2(xs, zs)
    return np.column_stack([gx, np.full(gx.size, y), gz])


def _plane_yz(y0, y1, z0, z1, x, spacing) -> np.ndarray:
    ys = np.arange(y0, y1 + 1e-9, spacing)
    zs = np.arange(z0, z1 + 1e-9, spacing)
    gy, gz = _grid2(ys, zs)
    return np.column_stack([np.full(gy.size, x), gy, gz])


def _cuboid_surface(w, d, h, spacing, z0=0.0, bottom=False) -> np.ndarray:
    """Axis-aligned cuboid surface centered at the xy origin, base at z0.

    Sides of floor-standing cuboids start one sample above the base: the
    contact ring is occluded in real scans and would be indistinguishable from
    floor anyway.
    """
    z_side = z0 + spacing if z0 == 0.0 and not bottom else z0
    parts = [
        _plane_xy(-w / 2, w / 2, -d / 2, d / 2, z0 + h, spacing),  # top
        _plane_xz(-w / 2, w / 2, z_side, z0 + h, -d / 2, spacing),
        _plane_xz(-w / 2, w / 2, z_side, z0 + h, d / 2, spacing),
        _plane_yz(-d / 2, d / 2, z_side, z0 + h, -w / 2, spacing),
        _plane_yz(-d / 2, d / 2, z_side, z0 + h, w / 2, spacing),
    ]
    if bottom:
        parts.append(_plane_xy(-w / 2, w / 2, -d / 2, d / 2, z0, spacing))
    return np.concatenate(parts, axis=0)


def _cylinder_surface(radius, h, spacing) -> np.ndarray:
    zs = np.arange(spacing, h + 1e-9, spacing)  # contact ring occluded
    n_theta = max(6, int(np.ceil(2 * np.pi * radius / spacing)))
    theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    gz, gt = _grid2(zs, theta)
    side = np.column_stack([radius * np.cos(gt), radius * np.sin(gt), gz])
    rr = np.arange(0.0, radius + 1e-9, spacing)
    cap = []
    for r in rr:
        n = max(1, int(np.ceil(2 * np.pi * r / spacing)))
        t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        cap.append(np.column_stack([r * np.cos(t), r * np.sin(t), np.full(n, h)]))
    return np.concatenate([side] + cap, axis=0)


def _bracket_surface(w, h, spacing, thickness=0.12, shelf_depth=0.4) -> np.ndarray:
    """L-shape: upright panel plus a horizontal shelf leaving from its top."""
    upright = _cuboid_surface(w, thickness, h, spacing, z0=0.0)
    shelf = _cuboid_surface(w, shelf_depth, thickness, spacing, z0=h, bottom=True)
    shelf[:, 1] += (shelf_depth + thickness) / 2.0
    return np.concatenate([upright, shelf], axis=0)


def _sample_object(
    kind: int, rng: np.random.Generator, spacing: float
) -> tuple[np.ndarray, tuple[float, float, float, float]]:
    """Instance points in local coordinates (base at z=0, centered in xy).

    Also returns the solid ground-contact footprint (x0, x1, y0, y1) used to
    occlude the floor beneath the object.
    """
    scale = 1.0 + 0.15 * (kind // 4)
    arch = kind % 4
    if arch == 0:  # low wide crate, mostly top face
        w = rng.uniform(0.65, 0.95) * scale
        d = rng.uniform(0.65, 0.95) * scale
        h = rng.uniform(0.25, 0.4) * scale
        return _cuboid_surface(w, d, h, spacing), (-w / 2, w / 2, -d / 2, d / 2)
    if arch == 1:  # tall round pillar
        r = rng.uniform(0.24, 0.34) * scale
        h = rng.uniform(1.9, 2.15)
        return _cylinder_surface(r, h, spacing), (-r, r, -r, r)
    if arch == 2:  # pedestal table: wide top slab on a thin central column
        w = rng.uniform(0.85, 1.15) * scale
        d = rng.uniform(0.85, 1.15) * scale
        z0 = rng.uniform(0.62, 0.72)
        top = _cuboid_surface(w, d, 0.08, spacing, z0=z0, bottom=True)
        column = _cylinder_surface(0.07, z0, spacing)
        return np.concatenate([top, column], axis=0), (-0.1, 0.1, -0.1, 0.1)
    # L-bracket
    w = rng.uniform(0.6, 0.9) * scale
    h = rng.uniform(1.35, 1.6)
    t = 0.12
    return _bracket_surface(w, h, spacing, thickness=t, shelf_depth=0.5), (
        -w / 2,
        w / 2,
        -t / 2,
        t / 2,
    )


def generate_synthetic_scene(spec: SynthSpec) -> Scene:
    """Deterministic scene with ground truth, exact instance boxes, and tags."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    c_total = spec.class_count

    point_parts: list[np.ndarray] = []
    label_parts: list[np.ndarray] = []
    room_of_part: list[int] = []
    instances: list[tuple[int, np.ndarray]] = []  # (class_id, points) for boxes

    obj_counter = 0
    for room in range(spec.rooms):
        ox = room * (spec.room_size + spec.room_gap)
        if room == 0:
            walls = False
        elif room == 1:
            walls = True
        else:
            walls = bool(rng.random() < spec.wall_probability)

        placed: list[tuple[float, float, float, float]] = []  # xy AABBs of objects
        footprints: list[tuple[float, float, float, float]] = []
        room_objects: list[tuple[int, np.ndarray]] = []
        for _ in range(spec.objects_per_room):
            fg_kind = obj_counter % spec.classes
            class_id = 2 + fg_kind
            obj_counter += 1
            local, solid = _sample_object(fg_kind, rng, spec.object_spacing)
            ext_w = local[:, 0].max() - local[:, 0].min()
            ext_d = local[:, 1].max() - local[:, 1].min()
            margin = 0.4
            pos = None
            for _try in range(30):
                px = rng.uniform(ox + margin + ext_w / 2, ox + spec.room_size - margin - ext_w / 2)
                py = rng.uniform(margin + ext_d / 2, spec.room_size - margin - ext_d / 2)
                cand = (px - ext_w / 2, px + ext_w / 2, py - ext_d / 2, py + ext_d / 2)
                clear = all(
                    cand[1] + 0.05 < q[0] or q[1] + 0.05 < cand[0] or cand[3] + 0.05 < q[2] or q[3] + 0.05 < cand[2]
                    for q in placed
                )
                if clear:
                    pos = (px, py)
                    placed.append(cand)
                    break
            if pos is None:
                px = rng.uniform(ox + margin, ox + spec.room_size - margin)
                py = rng.uniform(margin, spec.room_size - margin)
                pos = (px, py)
            pts = local.copy()
            pts[:, 0] += pos[0]
            pts[:, 1] += pos[1]
            room_objects.append((class_id, pts))
            footprints.append(
                (solid[0] + pos[0], solid[1] + pos[0], solid[2] + pos[1], solid[3] + pos[1])
            )

        # Floor, with holes where objects stand on it (occluded in a real scan).
        floor = _plane_xy(ox, ox + spec.room_size, 0.0, spec.room_size, 0.0, spec.floor_spacing)
        visible = np.ones(floor.shape[0], dtype=bool)
        for x0, x1, y0, y1 in footprints:
            covered = (
                (floor[:, 0] >= x0 - 0.02)
                & (floor[:, 0] <= x1 + 0.02)
                & (floor[:, 1] >= y0 - 0.02)
                & (floor[:, 1] <= y1 + 0.02)
            )
            visible &= ~covered
        floor = floor[visible]
        point_parts.append(floor)
        label_parts.append(np.full(floor.shape[0], FLOOR, dtype=np.int64))
        room_of_part.append(room)

        if walls:
            s = spec.room_size
            wpts = np.concatenate(
                [
                    _plane_xz(ox, ox + s, 0.0, spec.wall_height, 0.0, spec.wall_spacing),
                    _plane_xz(ox, ox + s, 0.0, spec.wall_height, s, spec.wall_spacing),
                    _plane_yz(0.0, s, 0.0, spec.wall_height, ox, spec.wall_spacing),
                    _plane_yz(0.0, s, 0.0, spec.wall_height, ox + s, spec.wall_spacing),
                ]
            )
            point_parts.append(wpts)
            label_parts.append(np.full(wpts.shape[0], WALL, dtype=np.int64))
            room_of_part.append(room)

        for class_id, pts in room_objects:
            point_parts.append(pts)
            label_parts.append(np.full(pts.shape[0], class_id, dtype=np.int64))
            room_of_part.append(room)
            instances.append((class_id, pts))

    xyz = np.concatenate(point_parts, axis=0)
    labels = np.concatenate(label_parts, axis=0)
    rooms_arr = np.concatenate(
        [np.full(p.shape[0], r, dtype=np.int64) for p, r in zip(point_parts, room_of_part)]
    )
    if spec.noise_sigma > 0:
        noise = rng.normal(0.0, spec.noise_sigma, size=xyz.shape)
        xyz = xyz + noise
    else:
        noise = np.zeros_like(xyz)

    # Instance boxes from the noisy points (exact hulls, optionally dilated).
    boxes: list[BoundingBox] = []
    offset = 0
    noisy_by_part: list[np.ndarray] = []
    for p in point_parts:
        noisy_by_part.append(xyz[offset : offset + p.shape[0]])
        offset += p.shape[0]
    inst_iter = iter(instances)
    for part_pts, lab in zip(noisy_by_part, label_parts):
        if lab[0] >= 2:
            class_id, _ = next(inst_iter)
            box = BoundingBox(
                tuple(part_pts.min(axis=0)), tuple(part_pts.max(axis=0)), class_id
            )
            if spec.box_dilation > 0:
                box = box.dilated(spec.box_dilation)
            boxes.append(box)

    # Reorder points into contiguous (room, height band) subclouds, shuffled
    # within each band so contiguous training batches mix all classes present.
    band = (xyz[:, 2] >= spec.band_split).astype(np.int64)
    shuffle = rng.permutation(xyz.shape[0])
    order = shuffle[np.lexsort((band[shuffle], rooms_arr[shuffle]))]
    xyz = xyz[order]
    labels = labels[order]
    rooms_arr = rooms_arr[order]
    band = band[order]

    subclouds: list[Subcloud] = []
    start = 0
    for i in range(1, xyz.shape[0] + 1):
        if i == xyz.shape[0] or rooms_arr[i] != rooms_arr[start] or band[i] != band[start]:
            tag = np.zeros(c_total, dtype=np.int64)
            tag[np.unique(labels[start:i])] = 1
            subclouds.append(Subcloud(start, i, tuple(int(t) for t in tag)))
            start = i

    return Scene(
        xyz=xyz,
        boxes=boxes,
        subclouds=subclouds,
        class_count=c_total,
        background_class_ids=frozenset({FLOOR, WALL}),
        gt_labels=labels,
    )


def heldout_spec(spec: SynthSpec, offset: int = 77_001) -> SynthSpec:
    """Same generator settings under an unrelated seed, for held-out evaluation."""
    return replace(spec, seed=spec.seed + offset)
