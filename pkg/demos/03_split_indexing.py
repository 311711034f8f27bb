"""How relative positions are quantised into table indices.

Angular offsets use a uniform split: fixed-width bins centred on zero.
Radial offsets use an exponential split: bins double in width as the
offset grows, so near offsets are resolved finely and the far field is
still covered by a short table.  The table below prints the actual bin
edges for the default geometry (range cap 120 m, 16 bins, so the unit
scale is a = 120 / 2**7 = 0.9375 m).
"""

import numpy as np

import sphere_attn as sa

radial_cfg = sa.RadialWindowConfig(delta_theta=2.0, delta_phi=2.0, r_max=120.0)
cfg = sa.default_posenc_config(radial_cfg, table_length=16)
print(f"unit scale a = {cfg.a} m, table length L = {cfg.table_length}")
print(f"angular bin width = {cfg.interval_theta} deg\n")

# recover each exponential bin's extent by probing a fine grid of offsets
probe = np.linspace(-130.0, 130.0, 2_000_001)
idx = sa.exp_split_index(probe, cfg)
print(" bin | radial offsets landing there")
for b in range(cfg.table_length):
    hits = probe[idx == b]
    print(f"  {b:2d} | {hits.min():+9.4f} .. {hits.max():+9.4f} m")

print("\nwidth doubling along the positive ladder:")
for k in range(0, 7):
    lo, hi = cfg.a * 2.0 ** (k - 1), cfg.a * 2.0**k
    print(f"  bin {8 + k:2d}: ({lo:8.4f}, {hi:8.4f}]  width {hi - lo:8.4f} m")

# angular offsets wrap the seam first, then bin uniformly
print("\nazimuth offsets near the wrap seam:")
for d in (359.0, 180.5, -180.0, 1.0):
    wrapped = sa.wrap_degrees(d)
    print(f"  raw {d:+7.1f} deg -> wrapped {wrapped:+7.1f} -> "
          f"bin {sa.uniform_split_index(wrapped, cfg.interval_theta, cfg.table_length)}")
