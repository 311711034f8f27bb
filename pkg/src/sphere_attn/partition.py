"""Window partitioning over point clouds.

Two bucketing schemes share one partition container:

* radial windows bin the *angular* spherical coordinates, so each window
  is a thin pyramid reaching from the sensor out to ``r_max``.  Points
  beyond ``r_max`` land in a reserved overflow window per angular cell.
* cubic windows bin the Cartesian coordinates into axis-aligned boxes.

Bucketing sorts tokens by window key (lexicographic) and returns CSR-style
offsets; token ids inside each window stay in ascending order.  Both the
key computation and the grouping are exact integer operations, so results
are bit-reproducible across runs and point orderings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConfigError, ShapeError

# Windows larger than this fall back to a bounding-box reach estimate
# instead of the quadratic exact pairwise scan.
EXACT_REACH_LIMIT = 2048


@dataclass(frozen=True)
class RadialWindowConfig:
    """Angular bin widths (degrees) and the radial extent of the scheme."""

    delta_theta: float = 2.0
    delta_phi: float = 2.0
    r_max: float = 120.0

    def __post_init__(self) -> None:
        if not (0 < self.delta_theta <= 360):
            raise ConfigError(f"delta_theta must be in (0, 360], got {self.delta_theta}")
        if not (0 < self.delta_phi <= 180):
            raise ConfigError(f"delta_phi must be in (0, 180], got {self.delta_phi}")
        if not self.r_max > 0:
            raise ConfigError(f"r_max must be positive, got {self.r_max}")


@dataclass(frozen=True)
class CubicWindowConfig:
    """Axis-aligned box side lengths in meters; a scalar means a cube."""

    side: tuple[float, float, float] = (5.0, 5.0, 5.0)

    def __post_init__(self) -> None:
        side = self.side
        if np.isscalar(side):
            side = (float(side),) * 3
        else:
            side = tuple(float(v) for v in side)
        if len(side) != 3:
            raise ConfigError(f"side must be a scalar or 3 values, got {self.side!r}")
        if not all(v > 0 for v in side):
            raise ConfigError(f"side lengths must be positive, got {side}")
        object.__setattr__(self, "side", side)


@dataclass(frozen=True)
class WindowPartition:
    """CSR grouping of token ids by window.

    ``token_ids[offsets[w]:offsets[w+1]]`` are the members of window ``w``
    in ascending id order; ``window_keys[w]`` is its integer key.  Windows
    are ordered by key (lexicographic) and every window is non-empty.
    """

    offsets: np.ndarray  # (w + 1,) int64, offsets[0] == 0
    token_ids: np.ndarray  # (n,) int64, a permutation of arange(n)
    window_keys: np.ndarray  # (w, k) int64, strictly increasing rows

    @property
    def window_count(self) -> int:
        return len(self.offsets) - 1

    @property
    def token_count(self) -> int:
        return len(self.token_ids)

    def window(self, w: int) -> np.ndarray:
        return self.token_ids[self.offsets[w]: self.offsets[w + 1]]

    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def iter_windows(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield (key, member token ids) in key order."""
        for w in range(self.window_count):
            yield self.window_keys[w], self.window(w)

    def window_of_tokens(self) -> np.ndarray:
        """Inverse map: (n,) array giving each token's window ordinal."""
        owner = np.empty(self.token_count, dtype=np.int64)
        for w in range(self.window_count):
            owner[self.window(w)] = w
        return owner


def radial_window_index(spherical: np.ndarray, cfg: RadialWindowConfig) -> np.ndarray:
    """Angular cell of each (r, theta, phi) row: (floor(theta / delta_theta),
    floor(phi / delta_phi)), int64.  Accepts (3,) or (n, 3)."""
    sph = np.asarray(spherical, dtype=np.float64)
    single = sph.ndim == 1
    s = np.atleast_2d(sph)
    if s.shape[1] != 3:
        raise ShapeError(f"spherical must be (n, 3) or (3,), got {np.shape(spherical)}")
    idx = np.stack(
        [
            np.floor(s[:, 1] / cfg.delta_theta),
            np.floor(s[:, 2] / cfg.delta_phi),
        ],
        axis=1,
    ).astype(np.int64)
    return idx[0] if single else idx


def radial_window_keys(spherical: np.ndarray, cfg: RadialWindowConfig) -> np.ndarray:
    """Full bucketing key (i_theta, i_phi, overflow) for each point.

    overflow is 1 for points with r > r_max, else 0, giving every angular
    cell a reserved far-field window so distant points never mix with the
    in-range ones.
    """
    sph = np.atleast_2d(np.asarray(spherical, dtype=np.float64))
    idx = np.atleast_2d(radial_window_index(sph, cfg))
    overflow = (sph[:, 0] > cfg.r_max).astype(np.int64)
    return np.column_stack([idx, overflow])


def cubic_window_index(positions: np.ndarray, cfg: CubicWindowConfig) -> np.ndarray:
    """Box cell of each Cartesian point: floor(p / side) per axis, int64.

    Mathematical floor, so negative coordinates bin correctly.  Accepts
    (3,) or (n, 3).
    """
    pos = np.asarray(positions, dtype=np.float64)
    single = pos.ndim == 1
    p = np.atleast_2d(pos)
    if p.shape[1] != 3:
        raise ShapeError(f"positions must be (n, 3) or (3,), got {np.shape(positions)}")
    side = np.asarray(cfg.side, dtype=np.float64)
    idx = np.floor(p / side).astype(np.int64)
    return idx[0] if single else idx


def bucket(keys: np.ndarray) -> WindowPartition:
    """Group row indices by identical key rows.

    Keys may be (n,) or (n, k) integers.  The grouping is a stable
    lexicographic sort, so window order is key order and ids inside each
    window come out ascending.
    """
    keys = np.asarray(keys)
    if keys.ndim == 1:
        keys = keys[:, None]
    if keys.ndim != 2:
        raise ShapeError(f"keys must be (n,) or (n, k), got {keys.shape}")
    if keys.shape[0] == 0:
        raise ValueError("cannot bucket an empty key set")
    if not np.issubdtype(keys.dtype, np.integer):
        raise ValueError(f"keys must be integers, got dtype {keys.dtype}")
    keys = keys.astype(np.int64, copy=False)
    n = keys.shape[0]

    # lexsort treats its *last* key as primary; feed columns reversed so
    # column 0 is the primary sort axis.  Stability keeps ids ascending.
    order = np.lexsort(tuple(keys[:, j] for j in range(keys.shape[1] - 1, -1, -1)))
    sorted_keys = keys[order]
    changed = np.any(sorted_keys[1:] != sorted_keys[:-1], axis=1)
    starts = np.concatenate([[0], np.flatnonzero(changed) + 1])
    offsets = np.concatenate([starts, [n]]).astype(np.int64)
    return WindowPartition(
        offsets=offsets,
        token_ids=order.astype(np.int64),
        window_keys=sorted_keys[starts],
    )


@dataclass(frozen=True)
class PartitionStats:
    """Occupancy and spatial-reach summary of one partition."""

    window_count: int
    occupancy_min: int
    occupancy_mean: float
    occupancy_max: int
    histogram: dict[int, int]  # window size -> number of windows
    reach_max: float
    reach_p99: float
    reach_approximate: bool

    def as_dict(self) -> dict:
        return {
            "window_count": self.window_count,
            "occupancy": {
                "min": self.occupancy_min,
                "mean": self.occupancy_mean,
                "max": self.occupancy_max,
            },
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
            "reach": {
                "max": self.reach_max,
                "p99": self.reach_p99,
                "approximate_flag": self.reach_approximate,
            },
        }


def partition_stats(
    part: WindowPartition,
    positions: np.ndarray,
    exact_reach_limit: int = EXACT_REACH_LIMIT,
) -> PartitionStats:
    """Occupancy histogram plus per-window reach (max pairwise distance).

    Reach is exact for windows up to ``exact_reach_limit`` members; larger
    windows use the bounding-box diagonal (an upper bound) and the result
    is flagged approximate.  Singleton windows have reach 0.
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ShapeError(f"positions must be (n, 3), got {pos.shape}")
    if part.token_count != pos.shape[0]:
        raise ShapeError(
            f"partition covers {part.token_count} tokens but positions has {pos.shape[0]}"
        )
    sizes = part.sizes()
    uniq, counts = np.unique(sizes, return_counts=True)

    reaches = np.zeros(part.window_count, dtype=np.float64)
    approximate = False
    for w in range(part.window_count):
        member_pos = pos[part.window(w)]
        m = len(member_pos)
        if m <= 1:
            continue
        if m <= exact_reach_limit:
            reaches[w] = float(pdist(member_pos).max())
        else:
            span = member_pos.max(axis=0) - member_pos.min(axis=0)
            reaches[w] = float(np.sqrt(np.sum(span * span)))
            approximate = True

    return PartitionStats(
        window_count=part.window_count,
        occupancy_min=int(sizes.min()),
        occupancy_mean=float(sizes.mean()),
        occupancy_max=int(sizes.max()),
        histogram={int(k): int(v) for k, v in zip(uniq, counts)},
        reach_max=float(reaches.max()),
        reach_p99=float(np.percentile(reaches, 99)),
        reach_approximate=approximate,
    )
