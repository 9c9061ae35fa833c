"""Core scene model: points, boxes, subcloud tags, pseudo labels, and their text formats.

A scene is an immutable bundle of a point cloud (xyz, optional rgb), axis-aligned
bounding boxes carrying foreground class ids, subcloud index ranges with binary
class-presence tags, and (for evaluation only) optional ground-truth labels.
Everything downstream reads from this module; nothing mutates a Scene after
construction, so scenes are safe to share across threads.

Scene text format (line oriented, UTF-8):

    SCENE v1 <num_points> <num_boxes> <num_subclouds> <C>
    P x y z [r g b]
    B xmin ymin zmin xmax ymax zmax class
    S start end tagbits          # tagbits: C-character 0/1 string, range [start, end)
    K class                      # optional background class id (derived when absent)
    G i class                    # optional per-point ground truth

Label file format:

    LABELS v1 <num_points>
    class confidence             # one line per point, class 255 = unlabeled

Floats are decimal with '.' separator and are written with full round-trip
precision (repr), so parse(serialize(x)) == x exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Optional, Sequence

import numpy as np

# Sentinel class id for unlabeled points in label files; caps usable classes at 255.
UNLABELED = 255

# Provenance tags for pseudo labels.
PROV_NONE = 0
PROV_BOX_PRIOR = 1
PROV_GRABCUT = 2
PROV_AST_PL = 3
PROV_PCAM = 4
PROV_REFINED_PCAM = 5

PROVENANCE_NAMES = {
    PROV_NONE: "None",
    PROV_BOX_PRIOR: "BoxPrior",
    PROV_GRABCUT: "GrabCut",
    PROV_AST_PL: "AST-PL",
    PROV_PCAM: "PCAM",
    PROV_REFINED_PCAM: "Refined-PCAM",
}


class SceneFormatError(ValueError):
    """Raised for malformed scene or label files; message names the offending record."""


class SceneInvariantError(ValueError):
    """Raised when constructed domain objects violate a type invariant."""


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with a foreground semantic class.

    min_corner <= max_corner componentwise; containment is boundary inclusive.
    """

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    class_id: int

    def validate(self, class_count: Optional[int] = None) -> None:
        for v in (*self.min_corner, *self.max_corner):
            if not math.isfinite(v):
                raise SceneInvariantError("non-finite box corner")
        for axis in range(3):
            if self.min_corner[axis] > self.max_corner[axis]:
                raise SceneInvariantError("inverted box extent on axis %d" % axis)
        if self.class_id < 0:
            raise SceneInvariantError("negative box class id")
        if class_count is not None and self.class_id >= class_count:
            raise SceneInvariantError(
                "box class id %d out of range [0, %d)" % (self.class_id, class_count)
            )

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.max_corner) - np.asarray(self.min_corner)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.max_corner) + np.asarray(self.min_corner))

    def shrunk(self, fraction: float) -> "BoundingBox":
        """Box scaled by (1 - fraction) per axis about its center."""
        c = self.center
        half = 0.5 * self.size * (1.0 - fraction)
        return BoundingBox(tuple(c - half), tuple(c + half), self.class_id)

    def dilated(self, fraction: float) -> "BoundingBox":
        c = self.center
        half = 0.5 * self.size * (1.0 + fraction)
        return BoundingBox(tuple(c - half), tuple(c + half), self.class_id)


def point_in_box(p: Sequence[float], box: BoundingBox) -> bool:
    """Boundary-inclusive containment test for a single point."""
    return bool(
        box.min_corner[0] <= p[0] <= box.max_corner[0]
        and box.min_corner[1] <= p[1] <= box.max_corner[1]
        and box.min_corner[2] <= p[2] <= box.max_corner[2]
    )


def points_in_box(xyz: np.ndarray, box: BoundingBox) -> np.ndarray:
    """Vectorized boundary-inclusive containment mask over an (N, 3) array."""
    lo = np.asarray(box.min_corner)
    hi = np.asarray(box.max_corner)
    return np.all((xyz >= lo) & (xyz <= hi), axis=1)


@dataclass(frozen=True)
class Subcloud:
    """Half-open point index range [start, end) with a binary class-presence tag."""

    start: int
    end: int
    tag: tuple[int, ...]

    def validate(self, num_points: int, class_count: int) -> None:
        if not (0 <= self.start <= self.end <= num_points):
            raise SceneInvariantError(
                "subcloud range [%d, %d) out of bounds for %d points"
                % (self.start, self.end, num_points)
            )
        if len(self.tag) != class_count:
            raise SceneInvariantError("tag length %d != class count %d" % (len(self.tag), class_count))
        if any(t not in (0, 1) for t in self.tag):
            raise SceneInvariantError("tag entries must be 0/1")
        if sum(self.tag) == 0:
            raise SceneInvariantError("empty subcloud tag")

    def tag_array(self) -> np.ndarray:
        return np.asarray(self.tag, dtype=np.float64)

    def tagged_classes(self) -> list[int]:
        return [c for c, t in enumerate(self.tag) if t]


@dataclass
class Scene:
    """Immutable point cloud with weak annotations.

    xyz is (N, 3) float64; rgb is (N, 3) in [0, 1] or None; gt_labels is (N,)
    int with UNLABELED for unannotated points, or None. background_class_ids
    must be disjoint from the box class ids. Subcloud ranges are disjoint.
    """

    xyz: np.ndarray
    boxes: list[BoundingBox]
    subclouds: list[Subcloud]
    class_count: int
    rgb: Optional[np.ndarray] = None
    background_class_ids: Optional[frozenset[int]] = None
    gt_labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if self.rgb is not None:
            self.rgb = np.asarray(self.rgb, dtype=np.float64).reshape(-1, 3)
        if self.gt_labels is not None:
            self.gt_labels = np.asarray(self.gt_labels, dtype=np.int64).reshape(-1)
        if self.background_class_ids is None:
            # Default: classes that appear in tags but are never boxed.
            tagged: set[int] = set()
            for s in self.subclouds:
                tagged.update(c for c, t in enumerate(s.tag) if t)
            self.background_class_ids = frozenset(
                tagged - {b.class_id for b in self.boxes}
            )
        self.background_class_ids = frozenset(self.background_class_ids)
        self.validate()

    @property
    def num_points(self) -> int:
        return int(self.xyz.shape[0])

    def validate(self) -> None:
        if self.class_count < 1 or self.class_count > UNLABELED:
            raise SceneInvariantError("class count must be in [1, %d]" % UNLABELED)
        if not np.all(np.isfinite(self.xyz)):
            raise SceneInvariantError("non-finite point coordinate")
        if self.rgb is not None:
            if self.rgb.shape != self.xyz.shape:
                raise SceneInvariantError("rgb shape mismatch")
            if np.any((self.rgb < 0.0) | (self.rgb > 1.0)):
                raise SceneInvariantError("color channel outside [0, 1]")
        for b in self.boxes:
            b.validate(self.class_count)
        spans: list[tuple[int, int]] = []
        for s in self.subclouds:
            s.validate(self.num_points, self.class_count)
            spans.append((s.start, s.end))
        spans.sort()
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 < a1:
                raise SceneInvariantError(
                    "overlapping subcloud ranges [%d, %d) and [%d, %d)" % (a0, a1, b0, b1)
                )
        box_classes = {b.class_id for b in self.boxes}
        if self.background_class_ids & box_classes:
            raise SceneInvariantError("background class ids intersect box class ids")
        for c in self.background_class_ids:
            if not (0 <= c < self.class_count):
                raise SceneInvariantError("background class id out of range")
        if self.gt_labels is not None:
            if self.gt_labels.shape[0] != self.num_points:
                raise SceneInvariantError("ground-truth length mismatch")
            bad = (self.gt_labels != UNLABELED) & (
                (self.gt_labels < 0) | (self.gt_labels >= self.class_count)
            )
            if np.any(bad):
                raise SceneInvariantError("ground-truth class id out of range")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        same_rgb = (self.rgb is None) == (other.rgb is None) and (
            self.rgb is None or np.array_equal(self.rgb, other.rgb)
        )
        same_gt = (self.gt_labels is None) == (other.gt_labels is None) and (
            self.gt_labels is None or np.array_equal(self.gt_labels, other.gt_labels)
        )
        return (
            np.array_equal(self.xyz, other.xyz)
            and self.boxes == other.boxes
            and self.subclouds == other.subclouds
            and self.class_count == other.class_count
            and self.background_class_ids == other.background_class_ids
            and same_rgb
            and same_gt
        )

    def subclouds_or_whole(self) -> list[Subcloud]:
        """Subcloud list, or the whole cloud as one all-classes subcloud when none declared."""
        if self.subclouds:
            return self.subclouds
        return [Subcloud(0, self.num_points, tuple([1] * self.class_count))]


@dataclass
class PseudoLabelMap:
    """Per-point optional (class, confidence, provenance).

    classes is (N,) with UNLABELED for unlabeled points; confidence is (N,)
    float in [0, 1] and is meaningful only where a class is present; provenance
    is (N,) uint8 of PROV_* codes (in-memory only, not serialized).
    """

    classes: np.ndarray
    confidence: np.ndarray
    provenance: np.ndarray

    @staticmethod
    def empty(num_points: int) -> "PseudoLabelMap":
        return PseudoLabelMap(
            classes=np.full(num_points, UNLABELED, dtype=np.int64),
            confidence=np.zeros(num_points, dtype=np.float64),
            provenance=np.zeros(num_points, dtype=np.uint8),
        )

    def __post_init__(self) -> None:
        self.classes = np.asarray(self.classes, dtype=np.int64).reshape(-1)
        self.confidence = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
        self.provenance = np.asarray(self.provenance, dtype=np.uint8).reshape(-1)
        if not (len(self.classes) == len(self.confidence) == len(self.provenance)):
            raise SceneInvariantError("pseudo-label array length mismatch")
        unl = self.classes == UNLABELED
        self.confidence = np.where(unl, 0.0, self.confidence)
        self.provenance = np.where(unl, PROV_NONE, self.provenance).astype(np.uint8)

    def __len__(self) -> int:
        return int(self.classes.shape[0])

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.classes != UNLABELED

    @property
    def labeled_fraction(self) -> float:
        n = len(self)
        return float(np.count_nonzero(self.labeled_mask)) / n if n else 0.0

    def copy(self) -> "PseudoLabelMap":
        return PseudoLabelMap(self.classes.copy(), self.confidence.copy(), self.provenance.copy())

    def set_label(self, index: int, class_id: int, conf: float, provenance: int) -> None:
        self.classes[index] = class_id
        self.confidence[index] = conf
        self.provenance[index] = provenance

    def clear_label(self, index: int) -> None:
        self.classes[index] = UNLABELED
        self.confidence[index] = 0.0
        self.provenance[index] = PROV_NONE

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PseudoLabelMap):
            return NotImplemented
        return np.array_equal(self.classes, other.classes) and np.array_equal(
            self.confidence, other.confidence
        )


# ----------------------------------------------------------------------------
# parsing / serialization
# ----------------------------------------------------------------------------


def _parse_floats(parts: list[str], record: str) -> list[float]:
    vals = []
    for p in parts:
        try:
            v = float(p)
        except ValueError as exc:
            raise SceneFormatError("bad number %r in record %r" % (p, record)) from exc
        if not math.isfinite(v):
            raise SceneFormatError("non-finite coordinate in record %r" % record)
        vals.append(v)
    return vals


def _parse_int(s: str, record: str) -> int:
    try:
        return int(s)
    except ValueError as exc:
        raise SceneFormatError("bad integer %r in record %r" % (s, record)) from exc


def parse_scene(stream: IO[str]) -> Scene:
    """Parse the scene text format; raises SceneFormatError naming any bad record."""
    lines = [ln.strip() for ln in stream]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise SceneFormatError("empty scene file")
    head = lines[0].split()
    if len(head) != 6 or head[0] != "SCENE" or head[1] != "v1":
        raise SceneFormatError("malformed header %r" % lines[0])
    num_points = _parse_int(head[2], lines[0])
    num_boxes = _parse_int(head[3], lines[0])
    num_subclouds = _parse_int(head[4], lines[0])
    class_count = _parse_int(head[5], lines[0])
    if min(num_points, num_boxes, num_subclouds) < 0 or class_count < 1:
        raise SceneFormatError("malformed header %r" % lines[0])

    xyz = np.zeros((num_points, 3), dtype=np.float64)
    rgb_rows: list[tuple[int, list[float]]] = []
    boxes: list[BoundingBox] = []
    subclouds: list[Subcloud] = []
    bg_ids: set[int] = set()
    gt: Optional[np.ndarray] = None
    p_seen = 0

    for ln in lines[1:]:
        parts = ln.split()
        kind = parts[0]
        if kind == "P":
            if len(parts) not in (4, 7):
                raise SceneFormatError("point record needs 3 or 6 values: %r" % ln)
            if p_seen >= num_points:
                raise SceneFormatError("more point records than declared in header")
            vals = _parse_floats(parts[1:], ln)
            xyz[p_seen] = vals[:3]
            if len(vals) == 6:
                rgb_rows.append((p_seen, vals[3:]))
            p_seen += 1
        elif kind == "B":
            if len(parts) != 8:
                raise SceneFormatError("box record needs 7 values: %r" % ln)
            vals = _parse_floats(parts[1:7], ln)
            cls = _parse_int(parts[7], ln)
            for axis in range(3):
                if vals[axis] > vals[3 + axis]:
                    raise SceneFormatError("inverted box extent in record %r" % ln)
            boxes.append(BoundingBox(tuple(vals[:3]), tuple(vals[3:6]), cls))
        elif kind == "S":
            if len(parts) != 4:
                raise SceneFormatError("subcloud record needs 3 values: %r" % ln)
            start = _parse_int(parts[1], ln)
            end = _parse_int(parts[2], ln)
            bits = parts[3]
            if len(bits) != class_count or any(ch not in "01" for ch in bits):
                raise SceneFormatError("bad tag bits in record %r" % ln)
            if not (0 <= start <= end <= num_points):
                raise SceneFormatError("subcloud range out of bounds in record %r" % ln)
            subclouds.append(Subcloud(start, end, tuple(int(ch) for ch in bits)))
        elif kind == "K":
            if len(parts) != 2:
                raise SceneFormatError("background-class record needs 1 value: %r" % ln)
            bg_ids.add(_parse_int(parts[1], ln))
        elif kind == "G":
            if len(parts) != 3:
                raise SceneFormatError("ground-truth record needs 2 values: %r" % ln)
            idx = _parse_int(parts[1], ln)
            cls = _parse_int(parts[2], ln)
            if not (0 <= idx < num_points):
                raise SceneFormatError("point index out of range in record %r" % ln)
            if gt is None:
                gt = np.full(num_points, UNLABELED, dtype=np.int64)
            gt[idx] = cls
        else:
            raise SceneFormatError("unknown record type %r" % ln)

    if p_seen != num_points:
        raise SceneFormatError("expected %d point records, found %d" % (num_points, p_seen))
    if len(boxes) != num_boxes:
        raise SceneFormatError("expected %d box records, found %d" % (num_boxes, len(boxes)))
    if len(subclouds) != num_subclouds:
        raise SceneFormatError(
            "expected %d subcloud records, found %d" % (num_subclouds, len(subclouds))
        )

    rgb = None
    if rgb_rows:
        if len(rgb_rows) != num_points:
            raise SceneFormatError("color present on some point records but not all")
        rgb = np.zeros((num_points, 3), dtype=np.float64)
        for i, c in rgb_rows:
            rgb[i] = c

    try:
        return Scene(
            xyz=xyz,
            boxes=boxes,
            subclouds=subclouds,
            class_count=class_count,
            rgb=rgb,
            background_class_ids=frozenset(bg_ids) if bg_ids else None,
            gt_labels=gt,
        )
    except SceneInvariantError as exc:
        raise SceneFormatError(str(exc)) from exc


def serialize_scene(scene: Scene, stream: IO[str]) -> None:
    stream.write(
        "SCENE v1 %d %d %d %d\n"
        % (scene.num_points, len(scene.boxes), len(scene.subclouds), scene.class_count)
    )
    for i in range(scene.num_points):
        x, y, z = scene.xyz[i]
        if scene.rgb is not None:
            r, g, b = scene.rgb[i]
            stream.write(
                "P %s %s %s %s %s %s\n" % (_fmt(x), _fmt(y), _fmt(z), _fmt(r), _fmt(g), _fmt(b))
            )
        else:
            stream.write("P %s %s %s\n" % (_fmt(x), _fmt(y), _fmt(z)))
    for b in scene.boxes:
        stream.write(
            "B %s %s %s %s %s %s %d\n"
            % (
                _fmt(b.min_corner[0]),
                _fmt(b.min_corner[1]),
                _fmt(b.min_corner[2]),
                _fmt(b.max_corner[0]),
                _fmt(b.max_corner[1]),
                _fmt(b.max_corner[2]),
                b.class_id,
            )
        )
    for s in scene.subclouds:
        stream.write("S %d %d %s\n" % (s.start, s.end, "".join(str(t) for t in s.tag)))
    for c in sorted(scene.background_class_ids):
        stream.write("K %d\n" % c)
    if scene.gt_labels is not None:
        for i, cls in enumerate(scene.gt_labels):
            if cls != UNLABELED:
                stream.write("G %d %d\n" % (i, cls))


def parse_labels(stream: IO[str]) -> PseudoLabelMap:
    lines = [ln.strip() for ln in stream]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise SceneFormatError("empty label file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "LABELS" or head[1] != "v1":
        raise SceneFormatError("malformed header %r" % lines[0])
    n = _parse_int(head[2], lines[0])
    if len(lines) - 1 != n:
        raise SceneFormatError("expected %d label records, found %d" % (n, len(lines) - 1))
    out = PseudoLabelMap.empty(n)
    for i, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != 2:
            raise SceneFormatError("label record needs 2 values: %r" % ln)
        cls = _parse_int(parts[0], ln)
        conf = _parse_floats([parts[1]], ln)[0]
        if cls != UNLABELED:
            if cls < 0 or cls > UNLABELED:
                raise SceneFormatError("class id out of range in record %r" % ln)
            if not (0.0 <= conf <= 1.0):
                raise SceneFormatError("confidence outside [0, 1] in record %r" % ln)
            out.classes[i] = cls
            out.confidence[i] = conf
    return out


def serialize_labels(labels: PseudoLabelMap, stream: IO[str], num_points: Optional[int] = None) -> None:
    """Write the label text format; unlabeled points get the 255 sentinel."""
    if num_points is not None and num_points != len(labels):
        raise SceneInvariantError(
            "label map has %d entries, expected %d" % (len(labels), num_points)
        )
    stream.write("LABELS v1 %d\n" % len(labels))
    for i in range(len(labels)):
        cls = int(labels.classes[i])
        if cls == UNLABELED:
            stream.write("255 0.0\n")
        else:
            stream.write("%d %s\n" % (cls, _fmt(labels.confidence[i])))


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as f:
        return parse_scene(f)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        serialize_scene(scene, f)


def load_labels(path) -> PseudoLabelMap:
    with open(path, "r", encoding="utf-8") as f:
        return parse_labels(f)


def save_labels(labels: PseudoLabelMap, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        serialize_labels(labels, f)
