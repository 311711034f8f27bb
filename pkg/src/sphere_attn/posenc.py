"""Relative-position encoding with exponentially growing radial bins.

Window attention needs a table index for every relative coordinate between
two tokens.  Along the radius the useful range spans several orders of
magnitude, so bins double in width as |r| grows: bin edges sit at
a, 2a, 4a, ... and a table of length L covers (-a * 2^(L/2-1), a * 2^(L/2-1)]
with fine resolution near zero.  Angular axes use plain uniform bins.

Index layout for the exponential split (L even, half = L/2):

    r == 0            -> half
    r in (0,    a]    -> half          (step 0)
    r in (a,   2a]    -> half + 1
    r in (2a,  4a]    -> half + 2 ...
    r in [-a,   0)    -> half - 1
    r in [-2a, -a)    -> half - 2 ...

i.e. positive radii occupy [half, L-1] and negative radii [0, half - 1],
with everything out of range clamped to the nearest end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .partition import CubicWindowConfig, RadialWindowConfig


@dataclass(frozen=True)
class PosEncConfig:
    """Binning parameters for relative coordinates inside one window.

    ``a`` is the width of the innermost radial bin, ``table_length`` the
    number of bins per axis (even), and the two intervals are the uniform
    bin widths for relative azimuth and inclination, in degrees.
    """

    a: float
    table_length: int = 16
    interval_theta: float = 0.25
    interval_phi: float = 0.25

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ConfigError(f"starting interval a must be positive, got {self.a}")
        if self.table_length < 4 or self.table_length % 2:
            raise ConfigError(
                f"table_length must be an even integer >= 4, got {self.table_length}"
            )
        if not (self.interval_theta > 0 and self.interval_phi > 0):
            raise ConfigError("angular intervals must be positive")


def default_posenc_config(
    radial_cfg: RadialWindowConfig, table_length: int = 16
) -> PosEncConfig:
    """Derive binning from the window geometry.

    The half-table of exponential bins is made to span exactly r_max:
    a = r_max / 2^(L/2 - 1).  Angular intervals split the window extent
    into L/2 bins each, so any in-window relative angle is representable.
    """
    half = table_length // 2
    return PosEncConfig(
        a=radial_cfg.r_max / 2.0 ** (half - 1),
        table_length=table_length,
        interval_theta=radial_cfg.delta_theta / half,
        interval_phi=radial_cfg.delta_phi / half,
    )


def cubic_intervals(cubic_cfg: CubicWindowConfig, table_length: int = 16) -> tuple[float, float, float]:
    """Uniform bin widths for relative x/y/z inside a cubic window."""
    half = table_length // 2
    return tuple(s / half for s in cubic_cfg.side)


def exp_split_index(r, cfg: PosEncConfig):
    """Exponentially growing bin index of a relative radius.

    Positive radii: half + max(0, ceil(log2(r / a))); negative radii mirror
    to the low half; zero maps to half.  The result is clamped into
    [0, table_length - 1].  Accepts scalars or arrays; returns int64.
    """
    r_arr = np.asarray(r, dtype=np.float64)
    half = cfg.table_length // 2
    mag = np.abs(r_arr)
    safe = np.where(mag > 0.0, mag, 1.0)
    steps = np.maximum(0.0, np.ceil(np.log2(safe / cfg.a)))
    raw = np.where(r_arr > 0.0, steps, np.where(r_arr < 0.0, -steps - 1.0, 0.0))
    idx = np.clip(raw.astype(np.int64) + half, 0, cfg.table_length - 1)
    return int(idx) if r_arr.ndim == 0 else idx


def uniform_split_index(value, interval: float, table_length: int):
    """Uniform bin index floor(value / interval) + L/2, clamped to [0, L-1].

    Used for relative angles and for relative x/y/z in cubic windows.
    Accepts scalars or arrays; returns int64.
    """
    if not interval > 0:
        raise ConfigError(f"interval must be positive, got {interval}")
    v = np.asarray(value, dtype=np.float64)
    idx = np.floor(v / float(interval)).astype(np.int64) + table_length // 2
    idx = np.clip(idx, 0, table_length - 1)
    return int(idx) if v.ndim == 0 else idx


def wrap_degrees(angle):
    """Wrap angles into (-180, 180].  Accepts scalars or arrays, float64 out."""
    a = np.asarray(angle, dtype=np.float64)
    m = np.mod(a, 360.0)
    out = np.where(m > 180.0, m - 360.0, m)
    return float(out) if a.ndim == 0 else out


@dataclass
class PosTables:
    """Three learned per-axis tables, each (L, heads, head_dim).

    An entry is the encoding contributed by one bin of one axis; the pair
    encoding of two tokens is the sum of their three per-axis entries.
    """

    t0: np.ndarray
    t1: np.ndarray
    t2: np.ndarray

    def __post_init__(self) -> None:
        shapes = {a.shape for a in (self.t0, self.t1, self.t2)}
        if len(shapes) != 1 or self.t0.ndim != 3:
            raise ShapeError(
                f"tables must share one (L, heads, head_dim) shape, got "
                f"{self.t0.shape}, {self.t1.shape}, {self.t2.shape}"
            )

    @property
    def table_length(self) -> int:
        return self.t0.shape[0]

    @property
    def num_heads(self) -> int:
        return self.t0.shape[1]

    @property
    def head_dim(self) -> int:
        return self.t0.shape[2]

    @classmethod
    def zeros(cls, table_length: int, num_heads: int, head_dim: int, dtype=np.float64) -> "PosTables":
        shape = (table_length, num_heads, head_dim)
        return cls(np.zeros(shape, dtype), np.zeros(shape, dtype), np.zeros(shape, dtype))

    @classmethod
    def random(
        cls,
        table_length: int,
        num_heads: int,
        head_dim: int,
        rng: np.random.Generator,
        scale: float = 0.02,
    ) -> "PosTables":
        shape = (table_length, num_heads, head_dim)
        return cls(
            rng.uniform(-scale, scale, shape),
            rng.uniform(-scale, scale, shape),
            rng.uniform(-scale, scale, shape),
        )

    def astype(self, dtype) -> "PosTables":
        return PosTables(
            self.t0.astype(dtype, copy=False),
            self.t1.astype(dtype, copy=False),
            self.t2.astype(dtype, copy=False),
        )

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.t0, self.t1, self.t2


def lookup_pair_encoding(tables: PosTables, idx0, idx1, idx2) -> np.ndarray:
    """Sum of the three per-axis table rows: output (..., heads, head_dim).

    Indices must already be valid table rows; out-of-range values raise
    IndexError rather than wrapping around.
    """
    length = tables.table_length
    for name, idx in (("idx0", idx0), ("idx1", idx1), ("idx2", idx2)):
        arr = np.asarray(idx)
        if arr.size and (arr.min() < 0 or arr.max() >= length):
            raise IndexError(f"{name} out of range [0, {length}) for table lookup")
    return tables.t0[idx0] + tables.t1[idx1] + tables.t2[idx2]


def position_bias(q: np.ndarray, k: np.ndarray, pair_enc: np.ndarray) -> np.ndarray:
    """Contextual bias (heads, n, n): bias[h,i,j] = q[i,h]·p[i,j,h] + k[j,h]·p[i,j,h].

    q and k are (n, heads, head_dim); pair_enc is (n, n, heads, head_dim).
    The query token contributes through its own row of the encoding, the
    key token through the column, so the bias depends on both content and
    relative position.
    """
    q = np.asarray(q)
    k = np.asarray(k)
    p = np.asarray(pair_enc)
    n, h, d = q.shape
    if k.shape != (n, h, d) or p.shape != (n, n, h, d):
        raise ShapeError(
            f"inconsistent shapes: q {q.shape}, k {k.shape}, pair_enc {p.shape}"
        )
    return np.einsum("ihd,ijhd->hij", q, p) + np.einsum("jhd,ijhd->hij", k, p)


def radial_pair_indices(
    rel_spherical: np.ndarray, cfg: PosEncConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Table indices for relative (r, theta, phi) coordinates.

    ``rel_spherical`` is (n, n, 3): row i minus row j per axis, with the
    azimuth difference already meaningful as a raw subtraction.  Azimuth
    is wrapped into (-180, 180] here so that windows straddling the 0/360
    seam still land in near-zero bins.
    """
    rel = np.asarray(rel_spherical, dtype=np.float64)
    if rel.ndim != 3 or rel.shape[2] != 3:
        raise ShapeError(f"rel_spherical must be (n, n, 3), got {rel.shape}")
    idx_r = exp_split_index(rel[..., 0], cfg)
    idx_theta = uniform_split_index(
        wrap_degrees(rel[..., 1]), cfg.interval_theta, cfg.table_length
    )
    idx_phi = uniform_split_index(rel[..., 2], cfg.interval_phi, cfg.table_length)
    return idx_r, idx_theta, idx_phi


def cartesian_pair_indices(
    rel_xyz: np.ndarray, intervals: tuple[float, float, float], table_length: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Table indices for relative (x, y, z): uniform bins on every axis."""
    rel = np.asarray(rel_xyz, dtype=np.float64)
    if rel.ndim != 3 or rel.shape[2] != 3:
        raise ShapeError(f"rel_xyz must be (n, n, 3), got {rel.shape}")
    return tuple(
        uniform_split_index(rel[..., axis], intervals[axis], table_length)
        for axis in range(3)
    )
