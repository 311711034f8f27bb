"""Multi-head window self-attention with relative-position bias.

Two layers of API:

* :func:`window_attention_forward` / :func:`window_attention_backward`
  run one window through the full op (project, bias, softmax, weighted
  sum, output projection) and expose an exact analytic gradient for every
  parameter.  This is the unit that the brute-force reference mirrors.

* :func:`sphere_attention_forward` / :func:`sphere_attention_backward`
  run a whole point cloud.  Heads are split across two window schemes:
  the low half of the heads attends inside radial (angular) windows, the
  high half inside cubic windows, each half with its own position tables.
  Per token the two half-outputs are concatenated and a single shared
  output projection mixes them, so every token sees both long-range
  radial context and local cubic context.  Q/K/V projections are shared
  by both halves.

Determinism: window members are processed in a canonical order (sorted by
position), gradients are accumulated with ``np.add.at`` in a fixed window
order, and all bucketing is exact integer math.  Given the same thread
count, outputs and gradients are bit-reproducible, and permuting the
input tokens permutes the outputs bit-exactly as long as positions are
pairwise distinct (ties fall back to input order).
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .geometry import Vec3, to_spherical
from .numerics import finite_difference_gradient, matmul, row_softmax
from .partition import (
    CubicWindowConfig,
    RadialWindowConfig,
    WindowPartition,
    bucket,
    cubic_window_index,
    radial_window_keys,
)
from .posenc import (
    PosEncConfig,
    PosTables,
    cartesian_pair_indices,
    cubic_intervals,
    lookup_pair_encoding,
    position_bias,
    radial_pair_indices,
)

WEIGHTS_MAGIC = b"SPW1"


@dataclass
class AttentionParams:
    """Shared projection weights.  All four matrices are (c, c) with
    c = num_heads * head_dim; head k owns columns [k*d, (k+1)*d)."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_proj: np.ndarray
    num_heads: int
    head_dim: int

    def __post_init__(self) -> None:
        self.w_q = np.asarray(self.w_q)
        self.w_k = np.asarray(self.w_k)
        self.w_v = np.asarray(self.w_v)
        self.w_proj = np.asarray(self.w_proj)
        if self.num_heads < 1 or self.head_dim < 1:
            raise ConfigError(
                f"num_heads and head_dim must be >= 1, got {self.num_heads}, {self.head_dim}"
            )
        c = self.channels
        for name, m in self.named_matrices():
            if m.shape != (c, c):
                raise ShapeError(f"{name} must be ({c}, {c}), got {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def channels(self) -> int:
        return self.num_heads * self.head_dim

    def named_matrices(self):
        return (
            ("w_q", self.w_q),
            ("w_k", self.w_k),
            ("w_v", self.w_v),
            ("w_proj", self.w_proj),
        )

    @classmethod
    def random(
        cls,
        num_heads: int,
        head_dim: int,
        rng: np.random.Generator,
        scale: Optional[float] = None,
    ) -> "AttentionParams":
        c = num_heads * head_dim
        s = scale if scale is not None else 1.0 / np.sqrt(c)
        draw = lambda: rng.uniform(-s, s, (c, c))
        return cls(draw(), draw(), draw(), draw(), num_heads, head_dim)

    def astype(self, dtype) -> "AttentionParams":
        return AttentionParams(
            self.w_q.astype(dtype, copy=False),
            self.w_k.astype(dtype, copy=False),
            self.w_v.astype(dtype, copy=False),
            self.w_proj.astype(dtype, copy=False),
            self.num_heads,
            self.head_dim,
        )


def project_qkv(
    features: np.ndarray, params: AttentionParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project (n, c) features to per-head queries/keys/values, each (h, n, d)."""
    f = np.asarray(features)
    if f.ndim != 2 or f.shape[1] != params.channels:
        raise ShapeError(
            f"features must be (n, {params.channels}), got {f.shape}"
        )
    n, h, d = f.shape[0], params.num_heads, params.head_dim

    def heads(m: np.ndarray) -> np.ndarray:
        return m.reshape(n, h, d).transpose(1, 0, 2)

    return (
        heads(matmul(f, params.w_q)),
        heads(matmul(f, params.w_k)),
        heads(matmul(f, params.w_v)),
    )


def _attend(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    pair_enc: np.ndarray,
    scale_logits: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Core attention on (h, n, d) tensors with an (n, n, h, d) pair encoding.

    logits[h,i,j] = q[h,i]·k[h,j] + q[h,i]·p[i,j,h] + k[h,j]·p[i,j,h],
    optionally scaled by 1/sqrt(d), then a row softmax and a weighted sum
    of values.  Returns (out (h, n, d), attn (h, n, n)).
    """
    logits = q @ k.transpose(0, 2, 1)
    logits += position_bias(q.transpose(1, 0, 2), k.transpose(1, 0, 2), pair_enc)
    if scale_logits:
        logits *= 1.0 / np.sqrt(q.shape[2])
    attn = row_softmax(logits)
    return attn @ v, attn


def _attend_backward(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    attn: np.ndarray,
    pair_enc: np.ndarray,
    d_out: np.ndarray,
    scale_logits: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of :func:`_attend` w.r.t. q, k, v and the pair encoding."""
    d_attn = d_out @ v.transpose(0, 2, 1)  # (h, n, n)
    d_v = attn.transpose(0, 2, 1) @ d_out
    # softmax backward: dL = attn * (d_attn - sum_j attn * d_attn)
    inner = np.sum(attn * d_attn, axis=-1, keepdims=True)
    d_logits = attn * (d_attn - inner)
    if scale_logits:
        d_logits = d_logits * (1.0 / np.sqrt(q.shape[2]))
    d_q = d_logits @ k + np.einsum("hij,ijhd->hid", d_logits, pair_enc)
    d_k = d_logits.transpose(0, 2, 1) @ q + np.einsum("hij,ijhd->hjd", d_logits, pair_enc)
    d_penc = np.einsum("hij,hid->ijhd", d_logits, q) + np.einsum(
        "hij,hjd->ijhd", d_logits, k
    )
    return d_q, d_k, d_v, d_penc


def _merge_heads(x: np.ndarray) -> np.ndarray:
    """(h, n, d) -> (n, h*d), head k into columns [k*d, (k+1)*d)."""
    h, n, d = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * d)


def _split_heads(x: np.ndarray, h: int, d: int) -> np.ndarray:
    """(n, h*d) -> (h, n, d); inverse of :func:`_merge_heads`."""
    return x.reshape(x.shape[0], h, d).transpose(1, 0, 2)


# ---------------------------------------------------------------------------
# Single-window op
# ---------------------------------------------------------------------------


@dataclass
class WindowTrace:
    """Intermediates of one window forward, enough to run the backward."""

    features: np.ndarray
    params: AttentionParams
    tables: PosTables
    scale_logits: bool
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    pair_enc: np.ndarray
    idx0: np.ndarray
    idx1: np.ndarray
    idx2: np.ndarray
    attn: np.ndarray
    zhat: np.ndarray


@dataclass
class WindowGradients:
    d_features: np.ndarray
    d_w_q: np.ndarray
    d_w_k: np.ndarray
    d_w_v: np.ndarray
    d_w_proj: np.ndarray
    d_tables: PosTables


def window_attention_forward(
    f_window: np.ndarray,
    params: AttentionParams,
    tables: PosTables,
    rel_coords: np.ndarray,
    penc_cfg: PosEncConfig,
    scale_logits: bool = False,
) -> tuple[np.ndarray, WindowTrace]:
    """Full attention op on one window of n tokens.

    ``rel_coords`` is the (n, n, 3) relative (r, theta, phi) tensor, row i
    minus row j.  All heads attend over the same window; tables must cover
    every head.  Returns the (n, c) output and a trace for the backward.
    """
    f = np.asarray(f_window)
    if tables.num_heads != params.num_heads or tables.head_dim != params.head_dim:
        raise ShapeError(
            f"tables are ({tables.table_length}, {tables.num_heads}, {tables.head_dim}), "
            f"expected head layout ({params.num_heads}, {params.head_dim})"
        )
    if tables.table_length != penc_cfg.table_length:
        raise ConfigError(
            f"tables have {tables.table_length} rows but config expects "
            f"{penc_cfg.table_length}"
        )
    rel = np.asarray(rel_coords, dtype=np.float64)
    if rel.shape != (f.shape[0], f.shape[0], 3):
        raise ShapeError(
            f"rel_coords must be ({f.shape[0]}, {f.shape[0]}, 3), got {rel.shape}"
        )
    dtype = np.float64 if f.dtype == np.float64 else np.float32
    f = f.astype(dtype, copy=False)
    pw = params.astype(dtype)
    tw = tables.astype(dtype)

    q, k, v = project_qkv(f, pw)
    idx0, idx1, idx2 = radial_pair_indices(rel, penc_cfg)
    pair_enc = lookup_pair_encoding(tw, idx0, idx1, idx2)
    out_heads, attn = _attend(q, k, v, pair_enc, scale_logits)
    zhat = _merge_heads(out_heads)
    z = matmul(zhat, pw.w_proj)
    trace = WindowTrace(
        features=f,
        params=pw,
        tables=tw,
        scale_logits=scale_logits,
        q=q,
        k=k,
        v=v,
        pair_enc=pair_enc,
        idx0=idx0,
        idx1=idx1,
        idx2=idx2,
        attn=attn,
        zhat=zhat,
    )
    return z, trace


def window_attention_backward(trace: WindowTrace, grad_z: np.ndarray) -> WindowGradients:
    """Exact gradients of the single-window op for every input and parameter."""
    g = np.asarray(grad_z, dtype=trace.zhat.dtype)
    if g.shape != trace.zhat.shape:
        raise ShapeError(f"grad_z must be {trace.zhat.shape}, got {g.shape}")
    p = trace.params
    h, d = p.num_heads, p.head_dim

    d_w_proj = matmul(trace.zhat.T, g)
    d_zhat = matmul(g, p.w_proj.T)
    d_out_heads = _split_heads(d_zhat, h, d)

    d_q, d_k, d_v, d_penc = _attend_backward(
        trace.q, trace.k, trace.v, trace.attn, trace.pair_enc, d_out_heads, trace.scale_logits
    )

    n = trace.features.shape[0]
    d_tables = PosTables.zeros(trace.tables.table_length, h, d, dtype=g.dtype)
    flat = d_penc.reshape(n * n, h, d)
    np.add.at(d_tables.t0, trace.idx0.reshape(-1), flat)
    np.add.at(d_tables.t1, trace.idx1.reshape(-1), flat)
    np.add.at(d_tables.t2, trace.idx2.reshape(-1), flat)

    d_qhat = _merge_heads(d_q)
    d_khat = _merge_heads(d_k)
    d_vhat = _merge_heads(d_v)
    f = trace.features
    return WindowGradients(
        d_features=matmul(d_qhat, p.w_q.T)
        + matmul(d_khat, p.w_k.T)
        + matmul(d_vhat, p.w_v.T),
        d_w_q=matmul(f.T, d_qhat),
        d_w_k=matmul(f.T, d_khat),
        d_w_v=matmul(f.T, d_vhat),
        d_w_proj=d_w_proj,
        d_tables=d_tables,
    )


# ---------------------------------------------------------------------------
# Whole-cloud forward with the radial/cubic head split
# ---------------------------------------------------------------------------


@dataclass
class PlanWindow:
    """One window's member ids (canonical order) and pair table indices."""

    ids: np.ndarray  # (n,) int64
    idx0: np.ndarray  # (n, n) int64 per axis
    idx1: np.ndarray
    idx2: np.ndarray


@dataclass
class AttentionPlan:
    """Everything about a forward pass that depends only on positions.

    Building the plan once and reusing it across calls keeps repeated
    forwards (finite differencing, benchmarking) cheap and guarantees the
    grouping cannot drift between evaluations.
    """

    n_tokens: int
    table_length: int
    radial_windows: list[PlanWindow]
    cubic_windows: list[PlanWindow]
    radial_partition: WindowPartition
    cubic_partition: WindowPartition


def _canonical_order(ids: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Sort member ids by position (x, then y, then z); ties keep id order.

    Window math then sums in an order independent of how the caller
    happened to number the tokens, which is what makes permuting the
    input permute the output bit-exactly.
    """
    p = positions[ids]
    return ids[np.lexsort((p[:, 2], p[:, 1], p[:, 0]))]


def build_attention_plan(
    positions: np.ndarray,
    radial_cfg: RadialWindowConfig,
    cubic_cfg: CubicWindowConfig,
    penc_cfg: PosEncConfig,
    origin: Vec3 = (0.0, 0.0, 0.0),
) -> AttentionPlan:
    """Bucket tokens under both window schemes and precompute pair indices."""
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ShapeError(f"positions must be (n, 3), got {pos.shape}")
    if pos.shape[0] == 0:
        raise ValueError("cannot build a plan for an empty cloud")
    sph = to_spherical(pos, origin)
    radial_part = bucket(radial_window_keys(sph, radial_cfg))
    cubic_part = bucket(cubic_window_index(pos, cubic_cfg))
    intervals = cubic_intervals(cubic_cfg, penc_cfg.table_length)

    radial_windows = []
    for w in range(radial_part.window_count):
        ids = _canonical_order(radial_part.window(w), pos)
        s = sph[ids]
        rel = s[:, None, :] - s[None, :, :]
        idx0, idx1, idx2 = radial_pair_indices(rel, penc_cfg)
        radial_windows.append(PlanWindow(ids, idx0, idx1, idx2))

    cubic_windows = []
    for w in range(cubic_part.window_count):
        ids = _canonical_order(cubic_part.window(w), pos)
        p = pos[ids]
        rel = p[:, None, :] - p[None, :, :]
        idx0, idx1, idx2 = cartesian_pair_indices(rel, intervals, penc_cfg.table_length)
        cubic_windows.append(PlanWindow(ids, idx0, idx1, idx2))

    return AttentionPlan(
        n_tokens=pos.shape[0],
        table_length=penc_cfg.table_length,
        radial_windows=radial_windows,
        cubic_windows=cubic_windows,
        radial_partition=radial_part,
        cubic_partition=cubic_part,
    )


@dataclass
class SphereTrace:
    """Intermediates of a whole-cloud forward, enough for the backward."""

    plan: AttentionPlan
    params: AttentionParams  # cast to the compute dtype
    tables_radial: PosTables
    tables_cubic: PosTables
    scale_logits: bool
    features: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    zhat: np.ndarray
    attn_radial: list[np.ndarray] = field(default_factory=list)
    attn_cubic: list[np.ndarray] = field(default_factory=list)

    @property
    def half_columns(self) -> int:
        """Column where the cubic-branch half of ``zhat`` starts."""
        return (self.params.num_heads // 2) * self.params.head_dim


@dataclass
class SphereGradients:
    d_features: np.ndarray
    d_w_q: np.ndarray
    d_w_k: np.ndarray
    d_w_v: np.ndarray
    d_w_proj: np.ndarray
    d_tables_radial: PosTables
    d_tables_cubic: PosTables

    def named(self):
        yield "features", self.d_features
        yield "w_q", self.d_w_q
        yield "w_k", self.d_w_k
        yield "w_v", self.d_w_v
        yield "w_proj", self.d_w_proj
        for branch, tab in (("radial", self.d_tables_radial), ("cubic", self.d_tables_cubic)):
            for axis, arr in zip(("t0", "t1", "t2"), tab.arrays()):
                yield f"{branch}_{axis}", arr


def _validate_branch_tables(
    params: AttentionParams,
    tables_radial: PosTables,
    tables_cubic: PosTables,
    table_length: int,
) -> None:
    if params.num_heads % 2:
        raise ConfigError(
            f"the dual-branch forward needs an even head count, got {params.num_heads}"
        )
    half = params.num_heads // 2
    for name, t in (("radial", tables_radial), ("cubic", tables_cubic)):
        if t.num_heads != half or t.head_dim != params.head_dim:
            raise ShapeError(
                f"{name} tables must be (L, {half}, {params.head_dim}), got "
                f"({t.table_length}, {t.num_heads}, {t.head_dim})"
            )
        if t.table_length != table_length:
            raise ConfigError(
                f"{name} tables have {t.table_length} rows, expected {table_length}"
            )


def _branches(plan: AttentionPlan, params: AttentionParams):
    """Yield (windows, head_lo, head_hi) for the radial then cubic branch."""
    half = params.num_heads // 2
    yield plan.radial_windows, 0, half
    yield plan.cubic_windows, half, params.num_heads


def _forward_on_plan(
    features: np.ndarray,
    params: AttentionParams,
    tables_radial: PosTables,
    tables_cubic: PosTables,
    plan: AttentionPlan,
    scale_logits: bool,
    need_trace: bool,
) -> tuple[np.ndarray, Optional[SphereTrace]]:
    f = np.asarray(features)
    if f.ndim != 2 or f.shape != (plan.n_tokens, params.channels):
        raise ShapeError(
            f"features must be ({plan.n_tokens}, {params.channels}), got {f.shape}"
        )
    _validate_branch_tables(params, tables_radial, tables_cubic, plan.table_length)
    dtype = np.float64 if f.dtype == np.float64 else np.float32
    f = f.astype(dtype, copy=False)
    pw = params.astype(dtype)
    d = pw.head_dim

    q, k, v = project_qkv(f, pw)
    zhat = np.zeros((plan.n_tokens, pw.channels), dtype=dtype)
    trace = (
        SphereTrace(
            plan=plan,
            params=pw,
            tables_radial=tables_radial.astype(dtype),
            tables_cubic=tables_cubic.astype(dtype),
            scale_logits=scale_logits,
            features=f,
            q=q,
            k=k,
            v=v,
            zhat=zhat,
        )
        if need_trace
        else None
    )

    for (windows, lo, hi), tables, attn_log in zip(
        _branches(plan, pw),
        (tables_radial, tables_cubic),
        ((trace.attn_radial, trace.attn_cubic) if trace else (None, None)),
    ):
        t0, t1, t2 = tables.astype(dtype).arrays()
        for w in windows:
            pair_enc = t0[w.idx0] + t1[w.idx1] + t2[w.idx2]
            out_heads, attn = _attend(
                q[lo:hi, w.ids], k[lo:hi, w.ids], v[lo:hi, w.ids], pair_enc, scale_logits
            )
            zhat[w.ids, lo * d: hi * d] = _merge_heads(out_heads)
            if attn_log is not None:
                attn_log.append(attn)

    z = matmul(zhat, pw.w_proj)
    return z, trace


def sphere_attention_forward(
    features: np.ndarray,
    positions: np.ndarray,
    params: AttentionParams,
    tables_radial: PosTables,
    tables_cubic: PosTables,
    radial_cfg: RadialWindowConfig,
    cubic_cfg: CubicWindowConfig,
    penc_cfg: PosEncConfig,
    origin: Vec3 = (0.0, 0.0, 0.0),
    scale_logits: bool = False,
    need_trace: bool = False,
    plan: Optional[AttentionPlan] = None,
) -> tuple[np.ndarray, Optional[SphereTrace]]:
    """Whole-cloud attention with the radial/cubic head split.

    Heads [0, h/2) attend inside radial windows using ``tables_radial``;
    heads [h/2, h) attend inside cubic windows using ``tables_cubic``.
    Both branches share the Q/K/V projections and the output projection.
    Returns (z, trace); the trace is None unless ``need_trace``.

    Float64 features run the whole pipeline in float64 (verification
    path); anything else runs in float32.
    """
    if plan is None:
        plan = build_attention_plan(positions, radial_cfg, cubic_cfg, penc_cfg, origin)
    elif plan.table_length != penc_cfg.table_length:
        raise ConfigError(
            f"plan was built for table_length {plan.table_length}, "
            f"config says {penc_cfg.table_length}"
        )
    return _forward_on_plan(
        features, params, tables_radial, tables_cubic, plan, scale_logits, need_trace
    )


def sphere_attention_backward(trace: SphereTrace, grad_z: np.ndarray) -> SphereGradients:
    """Exact gradients of the whole-cloud forward.

    Accumulation follows the plan's window order with ``np.add.at``, so
    repeated calls on the same trace are bit-identical.
    """
    pw = trace.params
    g = np.asarray(grad_z, dtype=trace.zhat.dtype)
    if g.shape != trace.zhat.shape:
        raise ShapeError(f"grad_z must be {trace.zhat.shape}, got {g.shape}")
    h, d = pw.num_heads, pw.head_dim
    dtype = trace.zhat.dtype

    d_w_proj = matmul(trace.zhat.T, g)
    d_zhat = matmul(g, pw.w_proj.T)

    d_q = np.zeros_like(trace.q)
    d_k = np.zeros_like(trace.k)
    d_v = np.zeros_like(trace.v)
    half = h // 2
    d_tab_radial = PosTables.zeros(trace.tables_radial.table_length, half, d, dtype=dtype)
    d_tab_cubic = PosTables.zeros(trace.tables_cubic.table_length, half, d, dtype=dtype)

    for (windows, lo, hi), tables, d_tab, attns in zip(
        _branches(trace.plan, pw),
        (trace.tables_radial, trace.tables_cubic),
        (d_tab_radial, d_tab_cubic),
        (trace.attn_radial, trace.attn_cubic),
    ):
        if len(attns) != len(windows):
            raise ValueError("trace is missing attention weights; forward ran without need_trace")
        t0, t1, t2 = tables.arrays()
        for w, attn in zip(windows, attns):
            n = len(w.ids)
            pair_enc = t0[w.idx0] + t1[w.idx1] + t2[w.idx2]
            d_out = _split_heads(d_zhat[w.ids, lo * d: hi * d], hi - lo, d)
            dq_w, dk_w, dv_w, d_penc = _attend_backward(
                trace.q[lo:hi, w.ids],
                trace.k[lo:hi, w.ids],
                trace.v[lo:hi, w.ids],
                attn,
                pair_enc,
                d_out,
                trace.scale_logits,
            )
            d_q[lo:hi, w.ids] = d_q[lo:hi, w.ids] + dq_w
            d_k[lo:hi, w.ids] = d_k[lo:hi, w.ids] + dk_w
            d_v[lo:hi, w.ids] = d_v[lo:hi, w.ids] + dv_w
            flat = d_penc.reshape(n * n, hi - lo, d)
            np.add.at(d_tab.t0, w.idx0.reshape(-1), flat)
            np.add.at(d_tab.t1, w.idx1.reshape(-1), flat)
            np.add.at(d_tab.t2, w.idx2.reshape(-1), flat)

    d_qhat = _merge_heads(d_q)
    d_khat = _merge_heads(d_k)
    d_vhat = _merge_heads(d_v)
    f = trace.features
    return SphereGradients(
        d_features=matmul(d_qhat, pw.w_q.T)
        + matmul(d_khat, pw.w_k.T)
        + matmul(d_vhat, pw.w_v.T),
        d_w_q=matmul(f.T, d_qhat),
        d_w_k=matmul(f.T, d_khat),
        d_w_v=matmul(f.T, d_vhat),
        d_w_proj=d_w_proj,
        d_tables_radial=d_tab_radial,
        d_tables_cubic=d_tab_cubic,
    )


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


@dataclass
class _CheckInstance:
    plan: AttentionPlan
    features: np.ndarray
    params: AttentionParams
    tables_radial: PosTables
    tables_cubic: PosTables
    grad_out: np.ndarray
    scale_logits: bool


def _random_instance(
    rng: np.random.Generator,
    n_tokens: int,
    num_heads: int,
    head_dim: int,
    table_length: int,
    scale_logits: bool,
) -> _CheckInstance:
    """A small random scene whose windows mix sizes 1..n under both schemes."""
    radial_cfg = RadialWindowConfig(delta_theta=45.0, delta_phi=45.0, r_max=8.0)
    cubic_cfg = CubicWindowConfig(side=(4.0, 4.0, 4.0))
    penc_cfg = PosEncConfig(
        a=radial_cfg.r_max / 2.0 ** (table_length // 2 - 1),
        table_length=table_length,
        interval_theta=radial_cfg.delta_theta / (table_length // 2),
        interval_phi=radial_cfg.delta_phi / (table_length // 2),
    )
    positions = rng.uniform(-6.0, 6.0, (n_tokens, 3))
    c = num_heads * head_dim
    features = rng.standard_normal((n_tokens, c))
    params = AttentionParams.random(num_heads, head_dim, rng, scale=0.5)
    half = num_heads // 2
    tables_radial = PosTables.random(table_length, half, head_dim, rng, scale=0.5)
    tables_cubic = PosTables.random(table_length, half, head_dim, rng, scale=0.5)
    grad_out = rng.standard_normal((n_tokens, c))
    plan = build_attention_plan(positions, radial_cfg, cubic_cfg, penc_cfg)
    return _CheckInstance(
        plan, features, params, tables_radial, tables_cubic, grad_out, scale_logits
    )


def _instance_gradient_errors(inst: _CheckInstance, eps: float) -> dict[str, float]:
    """Max relative error between analytic and central-difference gradients.

    Relative error per tensor is max|a - fd| / max(1, max|a|, max|fd|).
    The bucketing plan is fixed while coordinates are perturbed, so the
    finite differences probe exactly the map the backward differentiates.
    """
    z, trace = _forward_on_plan(
        inst.features,
        inst.params,
        inst.tables_radial,
        inst.tables_cubic,
        inst.plan,
        inst.scale_logits,
        need_trace=True,
    )
    analytic = dict(sphere_attention_backward(trace, inst.grad_out).named())

    p = inst.params
    slots = {
        "features": inst.features,
        "w_q": p.w_q,
        "w_k": p.w_k,
        "w_v": p.w_v,
        "w_proj": p.w_proj,
        "radial_t0": inst.tables_radial.t0,
        "radial_t1": inst.tables_radial.t1,
        "radial_t2": inst.tables_radial.t2,
        "cubic_t0": inst.tables_cubic.t0,
        "cubic_t1": inst.tables_cubic.t1,
        "cubic_t2": inst.tables_cubic.t2,
    }

    def loss_with(name: str, value: np.ndarray) -> float:
        tensors = {k: (value if k == name else v) for k, v in slots.items()}
        params = AttentionParams(
            tensors["w_q"], tensors["w_k"], tensors["w_v"], tensors["w_proj"],
            p.num_heads, p.head_dim,
        )
        t_rad = PosTables(tensors["radial_t0"], tensors["radial_t1"], tensors["radial_t2"])
        t_cub = PosTables(tensors["cubic_t0"], tensors["cubic_t1"], tensors["cubic_t2"])
        out, _ = _forward_on_plan(
            tensors["features"], params, t_rad, t_cub, inst.plan,
            inst.scale_logits, need_trace=False,
        )
        return float(np.sum(out * inst.grad_out))

    errors: dict[str, float] = {}
    for name, base in slots.items():
        shape = base.shape
        fd_flat = finite_difference_gradient(
            lambda vec: loss_with(name, vec.reshape(shape)),
            np.asarray(base, dtype=np.float64).reshape(-1),
            eps=eps,
        )
        a = analytic[name].reshape(-1)
        denom = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(fd_flat))))
        errors[name] = float(np.max(np.abs(a - fd_flat))) / denom
    return errors


def gradient_check(
    seed: int = 0,
    n_tokens: int = 6,
    num_heads: int = 2,
    head_dim: int = 2,
    table_length: int = 8,
    eps: float = 1e-5,
    scale_logits: bool = False,
) -> dict[str, float]:
    """Check one random instance; returns per-parameter max relative error."""
    rng = np.random.default_rng(seed)
    inst = _random_instance(rng, n_tokens, num_heads, head_dim, table_length, scale_logits)
    return _instance_gradient_errors(inst, eps)


def gradient_check_suite(
    trials: int = 100,
    base_seed: int = 0,
    eps: float = 1e-5,
    tolerance: float = 1e-4,
) -> dict:
    """Randomized gradient check across many small instances.

    Dimensions vary per trial (2 or 4 heads, head_dim 1..4, tokens 2..8,
    table length 8 or 16) and every parameter tensor is checked against
    central finite differences in float64.  Returns per-parameter worst
    errors, the overall worst, and a pass flag against ``tolerance``.
    """
    worst: dict[str, float] = {}
    start = time.perf_counter()
    for trial in range(trials):
        seed = base_seed + trial
        rng = np.random.default_rng(seed)
        num_heads = int(rng.choice([2, 2, 2, 2, 4]))
        head_dim = int(rng.choice([1, 2, 2, 3, 4] if num_heads == 2 else [1, 2]))
        n_tokens = int(rng.integers(2, 9))
        table_length = int(rng.choice([8, 8, 8, 16]))
        scale = bool(trial % 5 == 4)  # every fifth trial checks the scaled variant
        inst = _random_instance(rng, n_tokens, num_heads, head_dim, table_length, scale)
        for name, err in _instance_gradient_errors(inst, eps).items():
            if err > worst.get(name, -1.0):
                worst[name] = err
    max_err = max(worst.values())
    return {
        "trials": trials,
        "eps": eps,
        "per_parameter_max_rel_error": {k: worst[k] for k in sorted(worst)},
        "max_rel_error": max_err,
        "tolerance": tolerance,
        "passed": bool(max_err < tolerance),
        "elapsed_s": time.perf_counter() - start,
    }


# ---------------------------------------------------------------------------
# Weight serialization
# ---------------------------------------------------------------------------


def save_weights(
    path: str | Path,
    params: AttentionParams,
    tables_radial: PosTables,
    tables_cubic: PosTables,
) -> None:
    """Write the binary weights format.

    Layout: magic ``SPW1``; u32 num_heads, head_dim, table_length; then
    w_q, w_k, w_v, w_proj as (c, c) row-major little-endian f32; then the
    three radial tables and the three cubic tables, each
    (table_length, num_heads/2, head_dim) f32.
    """
    if params.num_heads % 2:
        raise ConfigError("weights format stores split-head models; head count must be even")
    half = params.num_heads // 2
    for name, t in (("radial", tables_radial), ("cubic", tables_cubic)):
        if (t.num_heads, t.head_dim) != (half, params.head_dim):
            raise ShapeError(f"{name} tables do not match the parameter head layout")
    if tables_radial.table_length != tables_cubic.table_length:
        raise ShapeError("radial and cubic tables must have the same length")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(
            struct.pack("<III", params.num_heads, params.head_dim, tables_radial.table_length)
        )
        for _, m in params.named_matrices():
            fh.write(np.ascontiguousarray(m, dtype="<f4").tobytes())
        for tables in (tables_radial, tables_cubic):
            for arr in tables.arrays():
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path: str | Path) -> tuple[AttentionParams, PosTables, PosTables]:
    """Read the format written by :func:`save_weights` (float32 arrays)."""
    blob = Path(path).read_bytes()
    if blob[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {WEIGHTS_MAGIC!r}")
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header")
    h, d, length = struct.unpack("<III", blob[4:16])
    if h == 0 or h % 2 or d == 0 or length == 0:
        raise FormatError(f"{path}: invalid header (heads={h}, head_dim={d}, L={length})")
    c = h * d
    half = h // 2
    mat_count = c * c
    tab_count = length * half * d
    expected = 16 + 4 * (4 * mat_count + 6 * tab_count)
    if len(blob) != expected:
        raise FormatError(f"{path}: file is {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob[16:], dtype="<f4")
    pos = 0

    def take(count: int, shape: tuple) -> np.ndarray:
        nonlocal pos
        out = data[pos: pos + count].reshape(shape).copy()
        pos += count
        return out

    mats = [take(mat_count, (c, c)) for _ in range(4)]
    tab_shape = (length, half, d)
    radial = PosTables(*(take(tab_count, tab_shape) for _ in range(3)))
    cubic = PosTables(*(take(tab_count, tab_shape) for _ in range(3)))
    params = AttentionParams(*mats, num_heads=h, head_dim=d)
    return params, radial, cubic
