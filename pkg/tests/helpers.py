"""Shared builders for attention test instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import sphere_attn as sa


@dataclass
class DualInstance:
    """A scene plus everything needed to run the dual-branch forward."""

    positions: np.ndarray
    features: np.ndarray
    params: sa.AttentionParams
    tables_radial: sa.PosTables
    tables_cubic: sa.PosTables
    radial_cfg: sa.RadialWindowConfig
    cubic_cfg: sa.CubicWindowConfig
    penc_cfg: sa.PosEncConfig

    def forward(self, features=None, need_trace=False, scale_logits=False):
        return sa.sphere_attention_forward(
            self.features if features is None else features,
            self.positions,
            self.params,
            self.tables_radial,
            self.tables_cubic,
            self.radial_cfg,
            self.cubic_cfg,
            self.penc_cfg,
            need_trace=need_trace,
            scale_logits=scale_logits,
        )

    def brute_force(self, scale_logits=False):
        return sa.brute_force_forward(
            self.positions,
            self.features,
            self.params,
            self.tables_radial,
            self.tables_cubic,
            self.radial_cfg,
            self.cubic_cfg,
            self.penc_cfg,
            scale_logits=scale_logits,
        )


def make_dual_instance(
    seed: int,
    beam_count: int = 6,
    azimuth_steps: int = 24,
    num_heads: int = 4,
    head_dim: int = 2,
    table_length: int = 16,
    delta_theta: float = 30.0,
    delta_phi: float = 15.0,
    r_max: float = 40.0,
    cubic_side: float = 10.0,
    r_min_scene: float = 1.0,
    r_max_scene: float = 50.0,
    dropout: float = 0.0,
    table_scale: float = 0.3,
) -> DualInstance:
    rng = np.random.default_rng(seed)
    scene = sa.generate_scene(
        sa.BeamSceneConfig(
            beam_count=beam_count,
            azimuth_steps=azimuth_steps,
            r_min=r_min_scene,
            r_max=r_max_scene,
            dropout=dropout,
            feature_dim=num_heads * head_dim,
            seed=seed,
        )
    )
    radial_cfg = sa.RadialWindowConfig(
        delta_theta=delta_theta, delta_phi=delta_phi, r_max=r_max
    )
    cubic_cfg = sa.CubicWindowConfig(side=(cubic_side,) * 3)
    penc_cfg = sa.default_posenc_config(radial_cfg, table_length)
    half = num_heads // 2
    return DualInstance(
        positions=scene.positions,
        features=scene.features,
        params=sa.AttentionParams.random(num_heads, head_dim, rng),
        tables_radial=sa.PosTables.random(table_length, half, head_dim, rng, scale=table_scale),
        tables_cubic=sa.PosTables.random(table_length, half, head_dim, rng, scale=table_scale),
        radial_cfg=radial_cfg,
        cubic_cfg=cubic_cfg,
        penc_cfg=penc_cfg,
    )
