import numpy as np
import pytest

from boxseg.slic import slic_superpoints
from boxseg.voxel import voxelize


def test_single_point_single_voxel():
    grid = voxelize(np.array([[1.0, 2.0, 3.0]]), 0.5)
    assert grid.num_voxels == 1
    assert grid.point_voxel[0] == 0


def test_unit_cube_corners_land_in_eight_voxels():
    corners = np.array(
        [[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)]
    )
    grid = voxelize(corners, 1.0)
    # floor((1 - 0) / 1) = 1, so coordinate-1 corners land in index 1.
    assert grid.num_voxels == 8
    keys = {tuple(k) for k in grid.keys}
    assert keys == {(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)}


def test_voxelization_is_a_partition():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-3, 3, size=(1000, 3))
    grid = voxelize(pts, 0.4)
    counts = np.bincount(grid.point_voxel, minlength=grid.num_voxels)
    assert counts.sum() == 1000
    assert np.all(counts > 0)


def test_voxel_centroids_inside_extent():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 2, size=(500, 3))
    grid = voxelize(pts, 0.3)
    lo = grid.origin + grid.keys * grid.voxel_size
    hi = lo + grid.voxel_size
    assert np.all(grid.centroids >= lo - 1e-12)
    assert np.all(grid.centroids <= hi + 1e-12)


def test_voxelize_rejects_bad_input():
    with pytest.raises(ValueError):
        voxelize(np.zeros((0, 3)), 0.5)
    with pytest.raises(ValueError):
        voxelize(np.zeros((2, 3)), 0.0)


def test_slic_one_superpoint_per_voxel():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 1, size=(200, 3))
    grid = voxelize(pts, 0.25)
    seg = slic_superpoints(grid, grid.num_voxels)
    assert seg.num_superpoints == grid.num_voxels
    assert all(m.size == 1 for m in seg.members)


def test_slic_single_superpoint():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1, size=(100, 3))
    grid = voxelize(pts, 0.3)
    seg = slic_superpoints(grid, 1)
    assert seg.num_superpoints == 1
    assert np.all(seg.voxel_superpoint == 0)


def test_slic_separates_two_blobs():
    # Two well-separated blobs must each resolve to one superpoint; the
    # reference assignment is brute-force 2-means on the blob structure.
    rng = np.random.default_rng(4)
    blob_a = rng.normal(0.0, 0.05, size=(60, 3))
    blob_b = rng.normal(0.0, 0.05, size=(60, 3)) + np.array([2.0, 0.0, 0.0])
    pts = np.concatenate([blob_a, blob_b])
    grid = voxelize(pts, 0.1)  # gap of 2.0 >= 10 voxel sizes
    seg = slic_superpoints(grid, 2)
    assert seg.num_superpoints == 2
    point_sp = seg.point_superpoint(grid)
    a_ids = set(point_sp[:60])
    b_ids = set(point_sp[60:])
    assert len(a_ids) == 1 and len(b_ids) == 1 and a_ids != b_ids


def test_slic_partition_property():
    rng = np.random.default_rng(5)
    pts = rng.uniform(0, 2, size=(400, 3))
    grid = voxelize(pts, 0.2)
    k = min(10, grid.num_voxels)
    seg = slic_superpoints(grid, k)
    total = sum(m.size for m in seg.members)
    assert total == grid.num_voxels
    assert seg.num_superpoints <= k


def test_slic_rejects_bad_target():
    grid = voxelize(np.array([[0.0, 0, 0], [1.0, 0, 0]]), 0.5)
    with pytest.raises(ValueError):
        slic_superpoints(grid, 0)
    with pytest.raises(ValueError):
        slic_superpoints(grid, grid.num_voxels + 1)
