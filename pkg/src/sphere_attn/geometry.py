"""Point-cloud containers, spherical coordinates, clipping, voxelization.

Angles are degrees throughout: azimuth theta in [0, 360) measured from +x
toward +y, inclination phi in [0, 180] measured down from +z.  The
conversion origin (the sensor position) is always an explicit argument;
nothing in this module guesses a frame.

All geometric math runs in float64 regardless of the storage dtype of the
inputs, so that bucketing decisions downstream are reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ShapeError

CLOUD_MAGIC = b"SPC1"

Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class SceneRange:
    """Axis-aligned crop box, half-open: a point is inside iff min <= p < max."""

    min: Vec3
    max: Vec3

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in self.min)
        hi = tuple(float(v) for v in self.max)
        if len(lo) != 3 or len(hi) != 3:
            raise ConfigError("range corners must have 3 components")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ConfigError(f"range min {lo} must be strictly below max {hi} on every axis")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def low(self) -> np.ndarray:
        return np.asarray(self.min, dtype=np.float64)

    @property
    def high(self) -> np.ndarray:
        return np.asarray(self.max, dtype=np.float64)


@dataclass
class PointCloud:
    """Positions (n, 3) plus per-point features (n, c).  c may be 0."""

    positions: np.ndarray
    features: np.ndarray

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions)
        self.features = np.asarray(self.features)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ShapeError(f"positions must be (n, 3), got {self.positions.shape}")
        if self.features.ndim != 2:
            raise ShapeError(f"features must be (n, c), got {self.features.shape}")
        if self.features.shape[0] != self.positions.shape[0]:
            raise ShapeError(
                f"positions ({self.positions.shape[0]}) and features "
                f"({self.features.shape[0]}) disagree on point count"
            )
        if self.positions.size and not np.all(np.isfinite(self.positions)):
            raise ValueError("positions contain non-finite values")
        if self.features.size and not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def to_spherical(positions: np.ndarray, origin: Vec3 = (0.0, 0.0, 0.0)) -> np.ndarray:
    """Cartesian -> (r, theta, phi) about ``origin``, degrees, float64.

    r is the Euclidean distance, theta = atan2(y, x) wrapped into [0, 360),
    phi = acos(z / r) in [0, 180].  A point exactly at the origin gets
    (0, 0, 0): the angles are undefined there and zero is the documented
    sentinel.  Accepts a single (3,) point or an (n, 3) batch and returns
    the matching shape.
    """
    pos = np.asarray(positions, dtype=np.float64)
    single = pos.ndim == 1
    pts = np.atleast_2d(pos)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeError(f"positions must be (n, 3) or (3,), got {np.shape(positions)}")
    d = pts - np.asarray(origin, dtype=np.float64)
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    r = np.sqrt(x * x + y * y + z * z)

    theta = np.degrees(np.arctan2(y, x))
    theta = np.where(theta < 0.0, theta + 360.0, theta)
    # atan2 can return exactly -0.0 -> +360.0 after the shift; fold it back.
    theta = np.where(theta >= 360.0, 0.0, theta)

    safe_r = np.where(r > 0.0, r, 1.0)
    cos_phi = np.clip(z / safe_r, -1.0, 1.0)
    phi = np.degrees(np.arccos(cos_phi))

    at_origin = r == 0.0
    theta = np.where(at_origin, 0.0, theta)
    phi = np.where(at_origin, 0.0, phi)

    out = np.stack([r, theta, phi], axis=1)
    return out[0] if single else out


def to_cartesian(spherical: np.ndarray, origin: Vec3 = (0.0, 0.0, 0.0)) -> np.ndarray:
    """Inverse of :func:`to_spherical` (degrees in, float64 out)."""
    sph = np.asarray(spherical, dtype=np.float64)
    single = sph.ndim == 1
    s = np.atleast_2d(sph)
    if s.ndim != 2 or s.shape[1] != 3:
        raise ShapeError(f"spherical must be (n, 3) or (3,), got {np.shape(spherical)}")
    r = s[:, 0]
    theta = np.radians(s[:, 1])
    phi = np.radians(s[:, 2])
    sin_phi = np.sin(phi)
    out = np.stack(
        [
            r * sin_phi * np.cos(theta),
            r * sin_phi * np.sin(theta),
            r * np.cos(phi),
        ],
        axis=1,
    ) + np.asarray(origin, dtype=np.float64)
    return out[0] if single else out


def clip_range(cloud: PointCloud, scene_range: SceneRange) -> PointCloud:
    """Drop points outside the half-open box [min, max); order is preserved."""
    pos = np.asarray(cloud.positions, dtype=np.float64)
    keep = np.all((pos >= scene_range.low) & (pos < scene_range.high), axis=1)
    return PointCloud(cloud.positions[keep], cloud.features[keep])


def voxelize(cloud: PointCloud, voxel_size: float, scene_range: SceneRange) -> PointCloud:
    """Average points in each occupied voxel of an axis-aligned grid.

    Voxel index of a point is floor((p - range.min) / voxel_size) per axis.
    Output has one point per occupied voxel (mean position, mean feature),
    ordered by voxel index with z fastest, then y, then x.  The cloud
    should already be clipped to ``scene_range``.
    """
    if not voxel_size > 0:
        raise ConfigError(f"voxel_size must be positive, got {voxel_size}")
    if len(cloud) == 0:
        return PointCloud(cloud.positions.copy(), cloud.features.copy())
    pos = np.asarray(cloud.positions, dtype=np.float64)
    feat = np.asarray(cloud.features, dtype=np.float64)
    idx = np.floor((pos - scene_range.low) / float(voxel_size)).astype(np.int64)

    # Sort by (x, y, z) index with z varying fastest within equal (x, y).
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
    idx_s, pos_s, feat_s = idx[order], pos[order], feat[order]
    new_voxel = np.any(idx_s[1:] != idx_s[:-1], axis=1)
    starts = np.concatenate([[0], np.flatnonzero(new_voxel) + 1])
    counts = np.diff(np.concatenate([starts, [len(cloud)]])).astype(np.float64)

    mean_pos = np.add.reduceat(pos_s, starts, axis=0) / counts[:, None]
    if feat.shape[1]:
        mean_feat = np.add.reduceat(feat_s, starts, axis=0) / counts[:, None]
    else:
        mean_feat = np.empty((len(starts), 0), dtype=np.float64)

    out_dtype = cloud.positions.dtype if cloud.positions.dtype.kind == "f" else np.float64
    return PointCloud(mean_pos.astype(out_dtype), mean_feat.astype(out_dtype))


def save_point_cloud(path: str | Path, cloud: PointCloud) -> None:
    """Write the binary cloud format: magic ``SPC1``, u32 count, u32 feature
    dim, then count records of (x, y, z, features...) as little-endian f32."""
    n, c = len(cloud), cloud.feature_dim
    records = np.hstack(
        [
            np.asarray(cloud.positions, dtype=np.float64),
            np.asarray(cloud.features, dtype=np.float64),
        ]
    ).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(CLOUD_MAGIC)
        fh.write(struct.pack("<II", n, c))
        fh.write(records.tobytes())


def load_point_cloud(path: str | Path) -> PointCloud:
    """Read the format written by :func:`save_point_cloud` (float32 arrays)."""
    blob = Path(path).read_bytes()
    if blob[:4] != CLOUD_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {CLOUD_MAGIC!r}")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header")
    n, c = struct.unpack("<II", blob[4:12])
    body = blob[12:]
    expected = n * (3 + c) * 4
    if len(body) != expected:
        raise FormatError(f"{path}: body is {len(body)} bytes, expected {expected}")
    data = np.frombuffer(body, dtype="<f4").reshape(n, 3 + c)
    return PointCloud(data[:, :3].copy(), data[:, 3:].copy())
