"""Coordinate conversion, clipping, voxelization, and the cloud format."""

import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from sphere_attn import (
    FormatError,
    PointCloud,
    SceneRange,
    ShapeError,
    clip_range,
    load_point_cloud,
    save_point_cloud,
    to_cartesian,
    to_spherical,
    voxelize,
)

finite3 = st.tuples(
    st.floats(-100, 100, allow_nan=False),
    st.floats(-100, 100, allow_nan=False),
    st.floats(-100, 100, allow_nan=False),
)


class TestToSpherical:
    def test_axes(self):
        # +x: theta 0, phi 90; +y: theta 90; -x: theta 180; +z: phi 0
        np.testing.assert_allclose(to_spherical([2, 0, 0]), [2, 0, 90], atol=1e-12)
        np.testing.assert_allclose(to_spherical([0, 3, 0]), [3, 90, 90], atol=1e-12)
        np.testing.assert_allclose(to_spherical([-4, 0, 0]), [4, 180, 90], atol=1e-12)
        np.testing.assert_allclose(to_spherical([0, 0, 5]), [5, 0, 0], atol=1e-12)
        np.testing.assert_allclose(to_spherical([0, 0, -5]), [5, 0, 180], atol=1e-12)

    def test_negative_y_wraps_into_upper_range(self):
        r, theta, phi = to_spherical([0, -1, 0])
        assert theta == pytest.approx(270.0)

    def test_origin_sentinel(self):
        np.testing.assert_array_equal(to_spherical([0, 0, 0]), [0, 0, 0])

    def test_explicit_origin(self):
        out = to_spherical([11, 5, 7], origin=(10.0, 5.0, 7.0))
        np.testing.assert_allclose(out, [1, 0, 90], atol=1e-12)

    def test_scalar_reference_agreement(self):
        """Vectorized conversion vs a per-point scalar recomputation."""
        rng = np.random.default_rng(0)
        pts = rng.uniform(-50, 50, (300, 3))
        out = to_spherical(pts)
        for i in range(len(pts)):
            x, y, z = pts[i]
            r = math.sqrt(x * x + y * y + z * z)
            theta = math.degrees(float(np.arctan2(y, x))) % 360.0
            phi = math.degrees(float(np.arccos(z / r)))
            np.testing.assert_allclose(out[i], [r, theta, phi], atol=1e-9)

    def test_theta_range_and_phi_range(self):
        rng = np.random.default_rng(1)
        sph = to_spherical(rng.uniform(-10, 10, (5000, 3)))
        assert np.all((sph[:, 1] >= 0) & (sph[:, 1] < 360))
        assert np.all((sph[:, 2] >= 0) & (sph[:, 2] <= 180))

    def test_rejects_bad_shape(self):
        with pytest.raises(ShapeError):
            to_spherical(np.zeros((4, 2)))

    @given(st.lists(finite3, min_size=1, max_size=20))
    @settings(max_examples=60, deadline=None)
    @example([(0.0, 0.0001, 42.0)])
    def test_roundtrip(self, pts):
        # Near the poles arccos amplifies rounding by 1/sin(phi), so the
        # transverse components carry absolute error up to ~radius * 1e-7.
        pos = np.array(pts, dtype=np.float64)
        back = to_cartesian(to_spherical(pos))
        bound = 2e-7 * (1.0 + np.linalg.norm(pos, axis=1, keepdims=True))
        assert np.all(np.abs(back - pos) <= bound)

    def test_rotation_about_z_shifts_theta_only(self):
        rng = np.random.default_rng(2)
        pos = rng.uniform(-20, 20, (200, 3))
        ang = 37.0
        c, s = np.cos(np.radians(ang)), np.sin(np.radians(ang))
        rot = pos @ np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]]).T
        a, b = to_spherical(pos), to_spherical(rot)
        np.testing.assert_allclose(b[:, 0], a[:, 0], atol=1e-9)  # r unchanged
        np.testing.assert_allclose(b[:, 2], a[:, 2], atol=1e-9)  # phi unchanged
        np.testing.assert_allclose(
            np.mod(b[:, 1] - a[:, 1], 360.0), np.full(200, ang), atol=1e-9
        )


class TestClipRange:
    def test_half_open_boundaries(self):
        rng = SceneRange((0, 0, 0), (1, 1, 1))
        cloud = PointCloud(
            np.array([[0.0, 0, 0], [0.5, 0.5, 0.5], [1.0, 0.5, 0.5], [-0.1, 0, 0]]),
            np.arange(8, dtype=np.float64).reshape(4, 2),
        )
        out = clip_range(cloud, rng)
        # min edge kept, max edge dropped, below-min dropped
        np.testing.assert_array_equal(out.positions, cloud.positions[:2])
        np.testing.assert_array_equal(out.features, cloud.features[:2])

    def test_matches_scalar_filter(self):
        gen = np.random.default_rng(3)
        cloud = PointCloud(gen.uniform(-2, 2, (500, 3)), gen.standard_normal((500, 4)))
        box = SceneRange((-1, -1.5, 0), (1, 0.5, 2))
        out = clip_range(cloud, box)
        keep = [
            i
            for i in range(500)
            if all(box.min[a] <= cloud.positions[i, a] < box.max[a] for a in range(3))
        ]
        np.testing.assert_array_equal(out.positions, cloud.positions[keep])

    def test_range_validation(self):
        with pytest.raises(ValueError):
            SceneRange((0, 0, 0), (1, 0, 1))


class TestVoxelize:
    def test_singletons_pass_through(self):
        # points in distinct voxels survive unchanged (up to reordering)
        pos = np.array([[0.05, 0.05, 0.05], [1.05, 0.05, 0.05], [0.05, 1.05, 0.05]])
        cloud = PointCloud(pos, np.eye(3))
        out = voxelize(cloud, 1.0, SceneRange((0, 0, 0), (2, 2, 2)))
        assert len(out) == 3
        assert {tuple(p) for p in out.positions} == {tuple(p) for p in pos}

    def test_means_within_voxel(self):
        pos = np.array([[0.1, 0.1, 0.1], [0.3, 0.1, 0.1], [0.1, 0.3, 0.3]])
        cloud = PointCloud(pos, np.array([[1.0], [2.0], [6.0]]))
        out = voxelize(cloud, 1.0, SceneRange((0, 0, 0), (1, 1, 1)))
        assert len(out) == 1
        np.testing.assert_allclose(out.positions[0], pos.mean(axis=0))
        np.testing.assert_allclose(out.features[0], [3.0])

    def test_matches_dict_oracle(self):
        rng = np.random.default_rng(4)
        box = SceneRange((-2, -2, -2), (2, 2, 2))
        cloud = PointCloud(rng.uniform(-2, 2, (800, 3)), rng.standard_normal((800, 3)))
        out = voxelize(cloud, 0.5, box)

        groups = {}
        for i in range(len(cloud)):
            key = tuple(
                int(math.floor((cloud.positions[i, a] - box.min[a]) / 0.5)) for a in range(3)
            )
            groups.setdefault(key, []).append(i)
        assert len(out) == len(groups)
        # output ordered by voxel index, z fastest
        expect_keys = sorted(groups)
        for row, key in enumerate(expect_keys):
            ids = groups[key]
            np.testing.assert_allclose(
                out.positions[row], cloud.positions[ids].mean(axis=0), atol=1e-12
            )
            np.testing.assert_allclose(
                out.features[row], cloud.features[ids].mean(axis=0), atol=1e-12
            )

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        box = SceneRange((0, 0, 0), (4, 4, 4))
        cloud = PointCloud(rng.uniform(0, 4, (300, 3)), rng.standard_normal((300, 2)))
        once = voxelize(cloud, 1.0, box)
        twice = voxelize(once, 1.0, box)
        np.testing.assert_array_equal(once.positions, twice.positions)
        np.testing.assert_array_equal(once.features, twice.features)

    def test_empty_cloud(self):
        cloud = PointCloud(np.zeros((0, 3)), np.zeros((0, 4)))
        out = voxelize(cloud, 0.5, SceneRange((0, 0, 0), (1, 1, 1)))
        assert len(out) == 0 and out.feature_dim == 4

    def test_rejects_nonpositive_voxel(self):
        cloud = PointCloud(np.zeros((1, 3)), np.zeros((1, 1)))
        with pytest.raises(ValueError):
            voxelize(cloud, 0.0, SceneRange((-1, -1, -1), (1, 1, 1)))


class TestCloudIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        cloud = PointCloud(
            rng.uniform(-10, 10, (50, 3)).astype(np.float32),
            rng.standard_normal((50, 5)).astype(np.float32),
        )
        path = tmp_path / "cloud.spc"
        save_point_cloud(path, cloud)
        back = load_point_cloud(path)
        np.testing.assert_array_equal(back.positions, cloud.positions)
        np.testing.assert_array_equal(back.features, cloud.features)

    def test_rewrite_is_byte_identical(self, tmp_path):
        cloud = PointCloud(np.ones((3, 3)), np.zeros((3, 2)))
        p1, p2 = tmp_path / "a.spc", tmp_path / "b.spc"
        save_point_cloud(p1, cloud)
        save_point_cloud(p2, cloud)
        assert p1.read_bytes() == p2.read_bytes()

    def test_zero_feature_channels(self, tmp_path):
        cloud = PointCloud(np.ones((4, 3)), np.zeros((4, 0)))
        path = tmp_path / "bare.spc"
        save_point_cloud(path, cloud)
        back = load_point_cloud(path)
        assert back.feature_dim == 0 and len(back) == 4

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.spc"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError):
            load_point_cloud(path)

    def test_truncated_body(self, tmp_path):
        cloud = PointCloud(np.ones((4, 3)), np.zeros((4, 2)))
        path = tmp_path / "trunc.spc"
        save_point_cloud(path, cloud)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(FormatError):
            load_point_cloud(path)


class TestPointCloudValidation:
    def test_count_mismatch(self):
        with pytest.raises(ShapeError):
            PointCloud(np.zeros((3, 3)), np.zeros((4, 2)))

    def test_nonfinite_positions(self):
        pos = np.zeros((2, 3))
        pos[0, 0] = np.nan
        with pytest.raises(ValueError):
            PointCloud(pos, np.zeros((2, 1)))
