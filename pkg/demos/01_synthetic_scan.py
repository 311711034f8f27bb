"""Generate a synthetic rotating-scanner point cloud and poke at it.

The generator mimics a spinning multi-beam range sensor: a fixed fan of
beams sweeps the full azimuth circle, each shot returns a random range,
and optional dropout removes shots entirely.  Point density therefore
falls off with distance -- the property that motivates distance-aware
windowing in the first place.
"""

import numpy as np
from scipy.spatial import cKDTree

import sphere_attn as sa

cfg = sa.BeamSceneConfig(
    beam_count=32,
    azimuth_steps=1024,
    r_min=1.0,
    r_max=100.0,
    dropout=0.1,
    feature_dim=8,
    seed=7,
)
scene = sa.generate_scene(cfg)
print(f"points: {len(scene)} (32 beams x 1024 steps, 10% dropout)")
print(f"feature dim: {scene.feature_dim}")

sph = sa.to_spherical(scene.positions)
print(f"range span: {sph[:, 0].min():.2f} .. {sph[:, 0].max():.2f} m")
print(f"inclination span: {sph[:, 2].min():.2f} .. {sph[:, 2].max():.2f} deg")

# nearest-neighbour spacing grows with distance from the sensor
tree = cKDTree(scene.positions)
nn = tree.query(scene.positions, k=2)[0][:, 1]
near = nn[sph[:, 0] < 20.0].mean()
far = nn[sph[:, 0] > 80.0].mean()
print(f"mean nearest-neighbour spacing: {near:.2f} m near, {far:.2f} m far")

# the on-disk format round-trips exactly (float32 records)
path = "/tmp/demo_scan.spc"
sa.save_point_cloud(path, sa.PointCloud(scene.positions.astype(np.float32),
                                        scene.features.astype(np.float32)))
back = sa.load_point_cloud(path)
print(f"saved and reloaded: {len(back)} points, byte-exact round trip:",
      np.array_equal(back.positions, scene.positions.astype(np.float32)))
