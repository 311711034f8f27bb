"""Synthetic scenes and brute-force reference implementations.

The scene generator mimics a spinning multi-beam range sensor: rays on a
fixed angular grid with random ranges, which reproduces the density
gradient of real outdoor scans (near points dense, far points sparse).

The brute-force functions recompute window attention with plain Python
floats, scalar loops, and dictionary bucketing.  They share no array
code with the fast paths; elementary functions that numpy and libm round
differently (arctan2, arccos, log2) are taken from numpy one scalar at a
time so that both routes make identical *binning* decisions while the
arithmetic around them stays independent.  They refuse inputs large
enough to make the quadratic loops painful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import AttentionParams
from .errors import ConfigError, ShapeError, SizeError
from .geometry import PointCloud, Vec3
from .partition import CubicWindowConfig, RadialWindowConfig
from .posenc import PosEncConfig, PosTables, cubic_intervals

MAX_BRUTE_FORCE_TOKENS = 4096


@dataclass(frozen=True)
class BeamSceneConfig:
    """Spinning-sensor scene: ``beam_count`` rings of ``azimuth_steps`` rays.

    Beams are spread over inclinations 60..100 degrees (a band around the
    horizon), azimuths cover the full circle, and each ray gets a range
    drawn uniformly from [r_min, r_max].  ``dropout`` removes rays at
    random, like occlusions.  Angles sit mid-bin on the grid, never on a
    multiple of common window widths.
    """

    beam_count: int = 32
    azimuth_steps: int = 1024
    r_min: float = 1.0
    r_max: float = 100.0
    dropout: float = 0.0
    feature_dim: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        if self.beam_count < 1 or self.azimuth_steps < 1:
            raise ConfigError("beam_count and azimuth_steps must be >= 1")
        if not (0 < self.r_min < self.r_max):
            raise ConfigError(f"need 0 < r_min < r_max, got {self.r_min}, {self.r_max}")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.feature_dim < 0:
            raise ConfigError(f"feature_dim must be >= 0, got {self.feature_dim}")


def generate_scene(cfg: BeamSceneConfig) -> PointCloud:
    """Deterministic synthetic scan; same config -> bit-identical cloud.

    Points are ordered beam-major (all azimuths of beam 0, then beam 1,
    ...).  Positions and features are float64.
    """
    rng = np.random.default_rng(cfg.seed)
    b, s = cfg.beam_count, cfg.azimuth_steps
    count = b * s
    incl = 60.0 + (np.arange(b) + 0.5) * (40.0 / b)  # degrees from +z
    azim = (np.arange(s) + 0.5) * (360.0 / s)
    phi = np.repeat(incl, s)
    theta = np.tile(azim, b)

    # Draw order is part of the format: ranges, then dropout, then features.
    ranges = rng.uniform(cfg.r_min, cfg.r_max, count)
    keep = rng.random(count) >= cfg.dropout
    features = rng.standard_normal((count, cfg.feature_dim))

    t = np.radians(theta)
    p = np.radians(phi)
    sin_p = np.sin(p)
    positions = np.stack(
        [ranges * sin_p * np.cos(t), ranges * sin_p * np.sin(t), ranges * np.cos(p)],
        axis=1,
    )
    return PointCloud(positions[keep], features[keep])


# ---------------------------------------------------------------------------
# Scalar reference math.  Everything below deliberately avoids numpy
# vector ops: plain floats, explicit loops, dict bucketing.
# ---------------------------------------------------------------------------


def _ref_spherical(x: float, y: float, z: float) -> tuple[float, float, float]:
    r = math.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        return 0.0, 0.0, 0.0
    theta = math.degrees(float(np.arctan2(y, x)))
    if theta < 0.0:
        theta += 360.0
    if theta >= 360.0:
        theta = 0.0
    u = z / r
    if u > 1.0:
        u = 1.0
    elif u < -1.0:
        u = -1.0
    phi = math.degrees(float(np.arccos(u)))
    return r, theta, phi


def _ref_exp_index(r: float, a: float, length: int) -> int:
    if r > 0.0:
        raw = max(0, math.ceil(float(np.log2(r / a))))
    elif r < 0.0:
        raw = -max(0, math.ceil(float(np.log2(-r / a)))) - 1
    else:
        raw = 0
    return min(length - 1, max(0, raw + length // 2))


def _ref_uniform_index(value: float, interval: float, length: int) -> int:
    return min(length - 1, max(0, math.floor(value / interval) + length // 2))


def _ref_wrap180(angle: float) -> float:
    m = angle % 360.0
    return m - 360.0 if m > 180.0 else m


def _ref_softmax(logits: list[float]) -> list[float]:
    top = max(logits)
    exps = [math.exp(v - top) for v in logits]
    total = sum(exps)
    return [e / total for e in exps]


def _ref_matmul(a: list[list[float]], b: list[list[float]]) -> list[list[float]]:
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for t in range(inner):
                acc += a[i][t] * b[t][j]
            out[i][j] = acc
    return out


def brute_force_window_forward(
    f_window: np.ndarray,
    params: AttentionParams,
    tables: PosTables,
    rel_coords: np.ndarray,
    penc_cfg: PosEncConfig,
    scale_logits: bool = False,
) -> np.ndarray:
    """Scalar re-implementation of the single-window op (all heads, one
    table set).  Returns the (n, c) output as float64."""
    f = np.asarray(f_window, dtype=np.float64)
    n = f.shape[0]
    if n > MAX_BRUTE_FORCE_TOKENS:
        raise SizeError(f"{n} tokens exceeds the brute-force cap {MAX_BRUTE_FORCE_TOKENS}")
    rel = np.asarray(rel_coords, dtype=np.float64)
    if rel.shape != (n, n, 3):
        raise ShapeError(f"rel_coords must be ({n}, {n}, 3), got {rel.shape}")
    h, d, c = params.num_heads, params.head_dim, params.channels
    if f.shape[1] != c:
        raise ShapeError(f"features must be (n, {c}), got {f.shape}")
    length = penc_cfg.table_length

    feats = f.tolist()
    w_q, w_k, w_v = params.w_q.tolist(), params.w_k.tolist(), params.w_v.tolist()
    t0, t1, t2 = (np.asarray(t, dtype=np.float64).tolist() for t in tables.arrays())
    qhat = _ref_matmul(feats, w_q)
    khat = _ref_matmul(feats, w_k)
    vhat = _ref_matmul(feats, w_v)

    scale = 1.0 / math.sqrt(d) if scale_logits else 1.0
    zhat = [[0.0] * c for _ in range(n)]
    for i in range(n):
        for head in range(h):
            base = head * d
            logits = []
            for j in range(n):
                i0 = _ref_exp_index(float(rel[i, j, 0]), penc_cfg.a, length)
                i1 = _ref_uniform_index(
                    _ref_wrap180(float(rel[i, j, 1])), penc_cfg.interval_theta, length
                )
                i2 = _ref_uniform_index(float(rel[i, j, 2]), penc_cfg.interval_phi, length)
                dot = 0.0
                bias = 0.0
                for t in range(d):
                    p_t = t0[i0][head][t] + t1[i1][head][t] + t2[i2][head][t]
                    dot += qhat[i][base + t] * khat[j][base + t]
                    bias += (qhat[i][base + t] + khat[j][base + t]) * p_t
                logits.append((dot + bias) * scale)
            probs = _ref_softmax(logits)
            for t in range(d):
                acc = 0.0
                for j in range(n):
                    acc += probs[j] * vhat[j][base + t]
                zhat[i][base + t] = acc
    z = _ref_matmul(zhat, params.w_proj.tolist())
    return np.asarray(z, dtype=np.float64)


def brute_force_forward(
    positions: np.ndarray,
    features: np.ndarray,
    params: AttentionParams,
    tables_radial: PosTables,
    tables_cubic: PosTables,
    radial_cfg: RadialWindowConfig,
    cubic_cfg: CubicWindowConfig,
    penc_cfg: PosEncConfig,
    origin: Vec3 = (0.0, 0.0, 0.0),
    scale_logits: bool = False,
    max_tokens: int = MAX_BRUTE_FORCE_TOKENS,
) -> np.ndarray:
    """Scalar re-implementation of the whole-cloud dual-branch forward.

    Windows are rebuilt here with dictionary bucketing; attention runs
    token by token in id order.  Output is (n, c) float64.
    """
    pos = np.asarray(positions, dtype=np.float64)
    f = np.asarray(features, dtype=np.float64)
    n = pos.shape[0]
    if n > max_tokens:
        raise SizeError(f"{n} tokens exceeds the brute-force cap {max_tokens}")
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ShapeError(f"positions must be (n, 3), got {pos.shape}")
    h, d, c = params.num_heads, params.head_dim, params.channels
    if h % 2:
        raise ConfigError(f"dual-branch reference needs an even head count, got {h}")
    if f.shape != (n, c):
        raise ShapeError(f"features must be ({n}, {c}), got {f.shape}")
    half = h // 2
    length = penc_cfg.table_length
    ox, oy, oz = (float(v) for v in origin)

    spherical = []
    radial_windows: dict[tuple, list[int]] = {}
    cubic_windows: dict[tuple, list[int]] = {}
    sx, sy, sz = cubic_cfg.side
    for i in range(n):
        x, y, z = (float(pos[i, 0]) - ox, float(pos[i, 1]) - oy, float(pos[i, 2]) - oz)
        r, theta, phi = _ref_spherical(x, y, z)
        spherical.append((r, theta, phi))
        rkey = (
            math.floor(theta / radial_cfg.delta_theta),
            math.floor(phi / radial_cfg.delta_phi),
            1 if r > radial_cfg.r_max else 0,
        )
        radial_windows.setdefault(rkey, []).append(i)
        ckey = (
            math.floor(float(pos[i, 0]) / sx),
            math.floor(float(pos[i, 1]) / sy),
            math.floor(float(pos[i, 2]) / sz),
        )
        cubic_windows.setdefault(ckey, []).append(i)

    feats = f.tolist()
    qhat = _ref_matmul(feats, params.w_q.tolist())
    khat = _ref_matmul(feats, params.w_k.tolist())
    vhat = _ref_matmul(feats, params.w_v.tolist())
    rad_tabs = [np.asarray(t, dtype=np.float64).tolist() for t in tables_radial.arrays()]
    cub_tabs = [np.asarray(t, dtype=np.float64).tolist() for t in tables_cubic.arrays()]
    intervals = cubic_intervals(cubic_cfg, length)
    scale = 1.0 / math.sqrt(d) if scale_logits else 1.0

    def pair_indices(i: int, j: int, radial: bool) -> tuple[int, int, int]:
        if radial:
            ri, ti, pi = spherical[i]
            rj, tj, pj = spherical[j]
            return (
                _ref_exp_index(ri - rj, penc_cfg.a, length),
                _ref_uniform_index(_ref_wrap180(ti - tj), penc_cfg.interval_theta, length),
                _ref_uniform_index(pi - pj, penc_cfg.interval_phi, length),
            )
        return tuple(
            _ref_uniform_index(
                float(pos[i, axis]) - float(pos[j, axis]), intervals[axis], length
            )
            for axis in range(3)
        )

    zhat = [[0.0] * c for _ in range(n)]
    for windows, tabs, radial, head_range in (
        (radial_windows, rad_tabs, True, range(0, half)),
        (cubic_windows, cub_tabs, False, range(half, h)),
    ):
        t0, t1, t2 = tabs
        for members in windows.values():
            for i in members:
                for head in head_range:
                    base = head * d
                    local = head - head_range.start  # row in the branch tables
                    logits = []
                    for j in members:
                        i0, i1, i2 = pair_indices(i, j, radial)
                        dot = 0.0
                        bias = 0.0
                        for t in range(d):
                            p_t = t0[i0][local][t] + t1[i1][local][t] + t2[i2][local][t]
                            dot += qhat[i][base + t] * khat[j][base + t]
                            bias += (qhat[i][base + t] + khat[j][base + t]) * p_t
                        logits.append((dot + bias) * scale)
                    probs = _ref_softmax(logits)
                    for t in range(d):
                        acc = 0.0
                        for jj, j in enumerate(members):
                            acc += probs[jj] * vhat[j][base + t]
                        zhat[i][base + t] = acc
    z = _ref_matmul(zhat, params.w_proj.tolist())
    return np.asarray(z, dtype=np.float64)
