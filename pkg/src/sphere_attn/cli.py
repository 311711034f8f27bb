"""Command line entry points.

Subcommands: ``gen`` (synthetic scene to disk), ``partition-stats``
(occupancy and reach of a window partition), ``forward`` (run the
attention forward over a cloud), ``gradcheck`` (finite-difference
verification of the analytic gradients), ``bench`` (timings).

Results go to stdout as a single JSON document; diagnostics go to
stderr.  Exit code 0 on success, 1 when a verification fails its
tolerance, 2 for bad configuration, files, or arguments.  Settings
resolve as: command-line flag, then --config JSON file, then built-in
default.  Set SPHERE_ATTN_THREADS to cap BLAS threads (useful for
bit-reproducible runs).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import resource
import sys
import time
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import (
    AttentionParams,
    build_attention_plan,
    gradient_check_suite,
    load_weights,
    save_weights,
    sphere_attention_forward,
)
from .errors import ConfigError, SphereAttnError
from .geometry import (
    PointCloud,
    SceneRange,
    clip_range,
    load_point_cloud,
    save_point_cloud,
    to_spherical,
    voxelize,
)
from .partition import (
    CubicWindowConfig,
    RadialWindowConfig,
    bucket,
    cubic_window_index,
    partition_stats,
    radial_window_keys,
)
from .posenc import PosEncConfig, PosTables
from .synth import BeamSceneConfig, generate_scene

# Keeps the threadpoolctl limiter alive for the life of the process.
_THREAD_LIMITER = None


@dataclass(frozen=True)
class RunConfig:
    """Every tunable the CLI understands, with library defaults."""

    # window geometry
    window_r: float = 120.0
    window_theta: float = 2.0
    window_phi: float = 2.0
    cubic_side: float = 5.0
    # position encoding
    table_length: int = 16
    split_a: Optional[float] = None  # None -> window_r / 2^(L/2 - 1)
    # attention
    heads: int = 4
    head_dim: int = 4
    scale_logits: bool = False
    # preprocessing
    voxel: Optional[float] = None  # None -> no voxel downsampling
    scene_min: tuple = (-75.2, -75.2, -2.0)
    scene_max: tuple = (75.2, 75.2, 4.0)
    # synthetic scenes
    seed: int = 0
    beams: int = 32
    steps: int = 1024
    r_min: float = 1.0
    r_max: float = 100.0
    dropout: float = 0.0
    feature_dim: int = 16

    def validate(self) -> None:
        if self.heads < 2 or self.heads % 2:
            raise ConfigError(f"heads must be an even integer >= 2, got {self.heads}")
        if self.head_dim < 1:
            raise ConfigError(f"head_dim must be >= 1, got {self.head_dim}")
        if self.table_length < 4 or self.table_length % 2:
            raise ConfigError(
                f"table_length must be an even integer >= 4, got {self.table_length}"
            )
        if self.voxel is not None and not self.voxel > 0:
            raise ConfigError(f"voxel must be positive, got {self.voxel}")
        # these constructors carry their own checks
        self.radial_config()
        self.cubic_config()
        self.posenc_config()

    def radial_config(self) -> RadialWindowConfig:
        return RadialWindowConfig(
            delta_theta=self.window_theta, delta_phi=self.window_phi, r_max=self.window_r
        )

    def cubic_config(self) -> CubicWindowConfig:
        return CubicWindowConfig(side=(self.cubic_side,) * 3)

    def posenc_config(self) -> PosEncConfig:
        half = self.table_length // 2
        a = self.split_a if self.split_a is not None else self.window_r / 2.0 ** (half - 1)
        return PosEncConfig(
            a=a,
            table_length=self.table_length,
            interval_theta=self.window_theta / half,
            interval_phi=self.window_phi / half,
        )

    def scene_config(self) -> BeamSceneConfig:
        return BeamSceneConfig(
            beam_count=self.beams,
            azimuth_steps=self.steps,
            r_min=self.r_min,
            r_max=self.r_max,
            dropout=self.dropout,
            feature_dim=self.feature_dim,
            seed=self.seed,
        )

    def scene_range(self) -> SceneRange:
        return SceneRange(tuple(self.scene_min), tuple(self.scene_max))


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def _load_config(path: Optional[str]) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        raw = json.loads(open(path).read())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "scene_min" in raw:
        raw["scene_min"] = tuple(raw["scene_min"])
    if "scene_max" in raw:
        raw["scene_max"] = tuple(raw["scene_max"])
    return replace(cfg, **raw)


def _merge_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Apply non-None CLI flags on top of the config-file values."""
    overrides = {}
    for name in _CONFIG_KEYS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides) if overrides else cfg


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = _merge_flags(_load_config(args.config), args)
    cfg.validate()
    return cfg


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _synthetic_cloud(cfg: RunConfig, n_points: int) -> PointCloud:
    """First n_points of a dropout-free beam scene (beam-major order)."""
    steps = max(1, math.ceil(n_points / cfg.beams))
    scene_cfg = replace(cfg.scene_config(), azimuth_steps=steps, dropout=0.0)
    cloud = generate_scene(scene_cfg)
    if len(cloud) < n_points:
        raise ConfigError(f"synthetic scene yields {len(cloud)} < {n_points} points")
    return PointCloud(cloud.positions[:n_points], cloud.features[:n_points])


def _load_tokens(cfg: RunConfig, args: argparse.Namespace) -> PointCloud:
    """Input cloud from --in or --synthetic, with optional voxel pooling."""
    if getattr(args, "in_path", None):
        cloud = load_point_cloud(args.in_path)
        _log(f"loaded {len(cloud)} points from {args.in_path}")
    elif getattr(args, "synthetic", None):
        cloud = _synthetic_cloud(cfg, args.synthetic)
        _log(f"generated {len(cloud)} synthetic points")
    else:
        raise ConfigError("need an input: --in FILE or --synthetic N")
    if cfg.voxel is not None:
        rng = cfg.scene_range()
        cloud = voxelize(clip_range(cloud, rng), cfg.voxel, rng)
        _log(f"voxelized at {cfg.voxel} m -> {len(cloud)} tokens")
    return cloud


def _random_weights(cfg: RunConfig) -> tuple[AttentionParams, PosTables, PosTables]:
    rng = np.random.default_rng(cfg.seed)
    params = AttentionParams.random(cfg.heads, cfg.head_dim, rng)
    half = cfg.heads // 2
    radial = PosTables.random(cfg.table_length, half, cfg.head_dim, rng)
    cubic = PosTables.random(cfg.table_length, half, cfg.head_dim, rng)
    return params, radial, cubic


def _partition_once(cfg: RunConfig, positions: np.ndarray, mode: str):
    if mode == "radial":
        keys = radial_window_keys(to_spherical(positions), cfg.radial_config())
    else:
        keys = cubic_window_index(positions, cfg.cubic_config())
    return bucket(keys)


def _partition_hash(part) -> str:
    digest = hashlib.sha256()
    digest.update(part.offsets.tobytes())
    digest.update(part.token_ids.tobytes())
    digest.update(part.window_keys.tobytes())
    return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    cloud = generate_scene(cfg.scene_config())
    save_point_cloud(args.out, cloud)
    _emit(
        {
            "points": len(cloud),
            "feature_dim": cloud.feature_dim,
            "seed": cfg.seed,
            "path": args.out,
        }
    )
    return 0


def cmd_partition_stats(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    cloud = _load_tokens(cfg, args)
    part = _partition_once(cfg, cloud.positions, args.mode)
    stats = partition_stats(part, cloud.positions)
    doc = {"mode": args.mode, "points": len(cloud)}
    doc.update(stats.as_dict())
    _emit(doc)
    return 0


def cmd_forward(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    cloud = _load_tokens(cfg, args)
    if args.weights:
        params, radial, cubic = load_weights(args.weights)
        # the file is authoritative for model dimensions
        cfg = replace(
            cfg,
            heads=params.num_heads,
            head_dim=params.head_dim,
            table_length=radial.table_length,
        )
        cfg.validate()
        _log(
            f"loaded weights: heads={params.num_heads} head_dim={params.head_dim} "
            f"table_length={radial.table_length}"
        )
    else:
        params, radial, cubic = _random_weights(cfg)
        _log(f"using random weights (seed {cfg.seed})")
        if args.save_weights:
            save_weights(args.save_weights, params, radial, cubic)
            _log(f"saved weights to {args.save_weights}")
    if cloud.feature_dim != params.channels:
        raise ConfigError(
            f"cloud has {cloud.feature_dim} feature channels, weights expect {params.channels}"
        )
    features = cloud.features.astype(np.float32)
    start = time.perf_counter()
    z, _ = sphere_attention_forward(
        features,
        cloud.positions,
        params,
        radial,
        cubic,
        cfg.radial_config(),
        cfg.cubic_config(),
        cfg.posenc_config(),
        scale_logits=cfg.scale_logits,
    )
    elapsed = time.perf_counter() - start
    save_point_cloud(args.out, PointCloud(cloud.positions, z))
    _emit(
        {
            "points": len(cloud),
            "channels": int(z.shape[1]),
            "forward_s": elapsed,
            "output_sha256": hashlib.sha256(
                np.ascontiguousarray(z, dtype="<f4").tobytes()
            ).hexdigest()[:16],
            "path": args.out,
        }
    )
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    result = gradient_check_suite(
        trials=args.trials,
        base_seed=cfg.seed,
        eps=args.eps,
        tolerance=args.tolerance,
    )
    _emit(result)
    if not result["passed"]:
        _log(
            f"gradient check FAILED: max rel error {result['max_rel_error']:.3e} "
            f">= {args.tolerance:.1e}"
        )
        return 1
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    cloud = _load_tokens(cfg, args)
    positions = cloud.positions

    part_times = []
    part = None
    for _ in range(args.repeat):
        start = time.perf_counter()
        part = _partition_once(cfg, positions, args.mode)
        part_times.append(time.perf_counter() - start)
    doc = {
        "points": len(cloud),
        "mode": args.mode,
        "repeat": args.repeat,
        "partition": {
            "median_s": float(np.median(part_times)),
            "p95_s": float(np.percentile(part_times, 95)),
            "runs_s": [float(t) for t in part_times],
            "windows": part.window_count,
            "hash": _partition_hash(part),
        },
    }

    if args.forward_tokens:
        m = min(args.forward_tokens, len(cloud))
        sub = PointCloud(cloud.positions[:m], cloud.features[:m])
        params, radial, cubic = _random_weights(cfg)
        if sub.feature_dim != params.channels:
            raise ConfigError(
                f"cloud has {sub.feature_dim} feature channels, "
                f"bench weights expect {params.channels}"
            )
        features = sub.features.astype(np.float32)
        plan_times, fwd_times = [], []
        for _ in range(args.repeat):
            start = time.perf_counter()
            plan = build_attention_plan(
                sub.positions, cfg.radial_config(), cfg.cubic_config(), cfg.posenc_config()
            )
            plan_times.append(time.perf_counter() - start)
            start = time.perf_counter()
            sphere_attention_forward(
                features,
                sub.positions,
                params,
                radial,
                cubic,
                cfg.radial_config(),
                cfg.cubic_config(),
                cfg.posenc_config(),
                scale_logits=cfg.scale_logits,
                plan=plan,
            )
            fwd_times.append(time.perf_counter() - start)
        doc["forward"] = {
            "tokens": m,
            "plan_median_s": float(np.median(plan_times)),
            "forward_median_s": float(np.median(fwd_times)),
            "forward_p95_s": float(np.percentile(fwd_times, 95)),
        }
    doc["peak_rss_mb"] = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
    _emit(doc)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig keys")
    p.add_argument("--seed", type=int, help="random seed (default 0)")


def _add_window_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window-r", dest="window_r", type=float, help="radial window extent, m")
    p.add_argument(
        "--window-theta", dest="window_theta", type=float, help="azimuth window width, deg"
    )
    p.add_argument(
        "--window-phi", dest="window_phi", type=float, help="inclination window width, deg"
    )
    p.add_argument("--cubic-side", dest="cubic_side", type=float, help="cubic window side, m")
    p.add_argument(
        "--voxel", type=float, help="voxel size for mean-pooling the input, m (off by default)"
    )
    p.add_argument("--table-length", dest="table_length", type=int, help="bins per table axis")


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--in", dest="in_path", help="input point cloud file")
    group.add_argument(
        "--synthetic", type=int, metavar="N", help="use N synthetic points instead of a file"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphere-attn",
        description="Radial/cubic window attention over point clouds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic scan")
    _add_common(p)
    p.add_argument("--out", required=True, help="output cloud path")
    p.add_argument("--beams", type=int, help="number of beam rings")
    p.add_argument("--steps", type=int, help="azimuth steps per ring")
    p.add_argument("--r-min", dest="r_min", type=float, help="minimum ray range, m")
    p.add_argument("--r-max", dest="r_max", type=float, help="maximum ray range, m")
    p.add_argument("--dropout", type=float, help="fraction of rays to drop")
    p.add_argument("--feature-dim", dest="feature_dim", type=int, help="feature channels")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("partition-stats", help="occupancy and reach of a partition")
    _add_common(p)
    _add_input_flags(p)
    _add_window_flags(p)
    p.add_argument(
        "--mode", choices=("radial", "cubic"), default="radial", help="window scheme"
    )
    p.set_defaults(func=cmd_partition_stats)

    p = sub.add_parser("forward", help="run the attention forward pass")
    _add_common(p)
    _add_input_flags(p)
    _add_window_flags(p)
    p.add_argument("--weights", help="weights file (random seeded weights if omitted)")
    p.add_argument("--save-weights", dest="save_weights", help="persist generated weights here")
    p.add_argument("--out", required=True, help="output cloud path (positions + outputs)")
    p.add_argument("--heads", type=int, help="head count for generated weights")
    p.add_argument("--head-dim", dest="head_dim", type=int, help="head width for generated weights")
    p.add_argument(
        "--scale-logits",
        dest="scale_logits",
        action=argparse.BooleanOptionalAction,
        help="scale attention logits by 1/sqrt(head_dim)",
    )
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("gradcheck", help="verify analytic gradients")
    _add_common(p)
    p.add_argument("--trials", type=int, default=10, help="random instances to check")
    p.add_argument("--eps", type=float, default=1e-5, help="finite-difference step")
    p.add_argument("--tolerance", type=float, default=1e-4, help="max relative error allowed")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="time partitioning and the forward pass")
    _add_common(p)
    _add_input_flags(p)
    _add_window_flags(p)
    p.add_argument(
        "--mode", choices=("radial", "cubic"), default="radial", help="partition scheme to time"
    )
    p.add_argument("--repeat", type=int, default=5, help="timing repetitions")
    p.add_argument(
        "--forward-tokens",
        dest="forward_tokens",
        type=int,
        default=0,
        help="also time the forward pass on this many tokens (0 = skip)",
    )
    p.add_argument("--heads", type=int, help="head count for bench weights")
    p.add_argument("--head-dim", dest="head_dim", type=int, help="head width for bench weights")
    p.add_argument("--feature-dim", dest="feature_dim", type=int, help="synthetic feature channels")
    p.set_defaults(func=cmd_bench)

    return parser


def _apply_thread_cap() -> None:
    global _THREAD_LIMITER
    raw = os.environ.get("SPHERE_ATTN_THREADS")
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"SPHERE_ATTN_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"SPHERE_ATTN_THREADS must be >= 1, got {n}")
    _THREAD_LIMITER = threadpool_limits(limits=n)
    _log(f"BLAS threads capped at {n}")


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_thread_cap()
        return args.func(args)
    except SphereAttnError as exc:
        _log(f"error: {exc}")
        return 2
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
