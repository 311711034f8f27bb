"""Window self-attention for sparse outdoor point clouds.

Tokens are bucketed into radial windows (thin pyramids along sensor rays,
good for sparse distant points) and cubic windows (axis-aligned boxes,
good for dense near-field structure).  Attention heads are split across
the two schemes and biased by relative-position tables whose radial bins
grow exponentially.  Everything ships with exact analytic gradients and
brute-force references that recompute the math from scratch.
"""

from .attention import (
    AttentionParams,
    AttentionPlan,
    SphereGradients,
    SphereTrace,
    WindowGradients,
    WindowTrace,
    build_attention_plan,
    gradient_check,
    gradient_check_suite,
    load_weights,
    project_qkv,
    save_weights,
    sphere_attention_backward,
    sphere_attention_forward,
    window_attention_backward,
    window_attention_forward,
)
from .errors import (
    ConfigError,
    FormatError,
    NumericError,
    ShapeError,
    SizeError,
    SphereAttnError,
)
from .geometry import (
    PointCloud,
    SceneRange,
    clip_range,
    load_point_cloud,
    save_point_cloud,
    to_cartesian,
    to_spherical,
    voxelize,
)
from .numerics import finite_difference_gradient, matmul, row_softmax
from .partition import (
    CubicWindowConfig,
    PartitionStats,
    RadialWindowConfig,
    WindowPartition,
    bucket,
    cubic_window_index,
    partition_stats,
    radial_window_index,
    radial_window_keys,
)
from .posenc import (
    PosEncConfig,
    PosTables,
    cartesian_pair_indices,
    cubic_intervals,
    default_posenc_config,
    exp_split_index,
    lookup_pair_encoding,
    position_bias,
    radial_pair_indices,
    uniform_split_index,
    wrap_degrees,
)
from .synth import (
    BeamSceneConfig,
    brute_force_forward,
    brute_force_window_forward,
    generate_scene,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionParams",
    "AttentionPlan",
    "BeamSceneConfig",
    "ConfigError",
    "CubicWindowConfig",
    "FormatError",
    "NumericError",
    "PartitionStats",
    "PointCloud",
    "PosEncConfig",
    "PosTables",
    "RadialWindowConfig",
    "SceneRange",
    "ShapeError",
    "SizeError",
    "SphereAttnError",
    "SphereGradients",
    "SphereTrace",
    "WindowGradients",
    "WindowPartition",
    "WindowTrace",
    "brute_force_forward",
    "brute_force_window_forward",
    "bucket",
    "build_attention_plan",
    "cartesian_pair_indices",
    "clip_range",
    "cubic_intervals",
    "cubic_window_index",
    "default_posenc_config",
    "exp_split_index",
    "finite_difference_gradient",
    "generate_scene",
    "gradient_check",
    "gradient_check_suite",
    "load_point_cloud",
    "load_weights",
    "lookup_pair_encoding",
    "matmul",
    "partition_stats",
    "position_bias",
    "project_qkv",
    "radial_pair_indices",
    "radial_window_index",
    "radial_window_keys",
    "row_softmax",
    "save_point_cloud",
    "save_weights",
    "sphere_attention_backward",
    "sphere_attention_forward",
    "to_cartesian",
    "to_spherical",
    "uniform_split_index",
    "voxelize",
    "window_attention_backward",
    "window_attention_forward",
    "wrap_degrees",
]
