"""Toy residual video backbone with pluggable temporal modules.

Each residual block runs `temporal module -> 3x3 conv (stride 2) -> relu ->
3x3 conv`, with a strided 1x1 projection on the skip path; a stride-2 3x3
stem lifts the input to the first stage's width (so grouping/folding
constraints hold even for single-channel video) and halves the resolution
once more, keeping the arithmetic desk-scale. The offset/weight generator
pools a block's input down to one scalar per frame, feeds a small hidden
layer, and emits tanh-bounded group offsets and sigmoid-bounded per-frame
weights.

Heads are zero-initialized, which makes a freshly built interlacing model an
exact no-op: its logits match the temporal-mode-free model bit for bit.

Forward/backward are hand-chained. `backbone_forward(..., return_cache=True)`
hands back everything `backbone_backward` needs; parameter gradients
accumulate into the ParamStore.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import ops
from .ops import ShapeError, as_f64
from .temporal import (
    GroupSpec,
    InterlaceParams,
    ShiftSpec,
    interlace_backward,
    interlace_forward,
    segment_consensus,
    segment_consensus_backward,
    tsm_shift,
    tsm_shift_backward,
)

TEMPORAL_MODES = ("none", "tsm", "tin")
HEAD_MODES = ("pool", "consensus")


@dataclass
class ModelConfig:
    frames: int
    in_channels: int
    height: int
    width: int
    num_classes: int
    temporal_mode: str = "none"
    num_groups: int = 2
    delta_max: float | None = None
    fold: float = 0.25
    channels: tuple[int, ...] = (8, 16, 32)
    dropout: float = 0.5
    hidden: int = 16
    head: str = "pool"

    def __post_init__(self):
        if self.temporal_mode not in TEMPORAL_MODES:
            raise ValueError(f"unknown temporal_mode {self.temporal_mode!r}")
        if self.head not in HEAD_MODES:
            raise ValueError(f"unknown head mode {self.head!r}")
        if self.frames < 1 or self.num_classes < 1 or not self.channels:
            raise ValueError("frames, num_classes and channels must be non-empty/positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0,1), got {self.dropout}")
        if self.delta_max is None:
            self.delta_max = self.frames / 2.0
        if self.delta_max <= 0:
            raise ValueError("delta_max must be positive")
        if self.temporal_mode == "tin":
            if not 1 <= self.num_groups <= min(self.block_in_channels):
                raise ValueError(
                    f"{self.num_groups} groups do not fit the narrowest stage "
                    f"({min(self.block_in_channels)} channels)"
                )
        if self.temporal_mode == "tsm":
            spec = ShiftSpec(self.fold)
            for c in self.block_in_channels:
                spec.fold_channels(c)  # raises if the fold cannot fit

    @property
    def num_blocks(self) -> int:
        return len(self.channels)

    @property
    def block_in_channels(self) -> tuple[int, ...]:
        # the stem lifts input to channels[0], so block 0 sees channels[0]
        return (self.channels[0],) + tuple(self.channels[:-1])


class ParamStore:
    """Ordered name -> float64 tensor map with a same-shaped gradient slot each."""

    def __init__(self):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> None:
        if name in self.values:
            raise ValueError(f"duplicate parameter name {name!r}")
        arr = as_f64(value).copy()
        self.values[name] = arr
        self.grads[name] = np.zeros_like(arr)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def names(self) -> list[str]:
        return list(self.values)

    def add_grad(self, name: str, g) -> None:
        self.grads[name] += g

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def num_parameters(self) -> int:
        return sum(v.size for v in self.values.values())


def _rng_for(seed: int, name: str) -> np.random.Generator:
    # Name-keyed streams: adding or removing parameters never shifts the
    # initialization of the others, so tin/tsm/none share backbone weights.
    digest = hashlib.sha256(name.encode()).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: ModelConfig, seed: int) -> ParamStore:
    """Seeded Glorot-uniform weights, zero biases, zero offset/weight heads."""
    store = ParamStore()

    def conv(name, c_out, c_in, k):
        rng = _rng_for(seed, name)
        store.add(name + ".weight", _glorot(rng, (c_out, c_in, k, k), c_in * k * k, c_out * k * k))
        store.add(name + ".bias", np.zeros(c_out))

    def dense(name, n_out, n_in, zero=False):
        if zero:
            store.add(name + ".weight", np.zeros((n_out, n_in)))
        else:
            rng = _rng_for(seed, name)
            store.add(name + ".weight", _glorot(rng, (n_out, n_in), n_in, n_out))
        store.add(name + ".bias", np.zeros(n_out))

    conv("stem", cfg.channels[0], cfg.in_channels, 3)
    for i, (c_in, c_out) in enumerate(zip(cfg.block_in_channels, cfg.channels)):
        conv(f"block{i}.conv1", c_out, c_in, 3)
        conv(f"block{i}.conv2", c_out, c_out, 3)
        conv(f"block{i}.skip", c_out, c_in, 1)
        if cfg.temporal_mode == "tin":
            dense(f"block{i}.tin.trunk", cfg.hidden, cfg.frames)
            dense(f"block{i}.tin.offs", cfg.num_groups, cfg.hidden, zero=True)
            dense(f"block{i}.tin.wts", cfg.num_groups * cfg.frames, cfg.hidden, zero=True)
    dense("head", cfg.num_classes, cfg.channels[-1])
    return store


# ---------------------------------------------------------------------------
# offset/weight generator
# ---------------------------------------------------------------------------

def offset_weight_net_forward(feat, params: ParamStore, cfg: ModelConfig, prefix: str = "tin."):
    """Map block-input features [N,T,C,H,W] to interlace offsets and weights.

    Pipeline: spatial mean -> channel mean -> [N,T] -> hidden relu layer ->
    offsets = delta_max * tanh(head), weights = 2 * sigmoid(head) as [N,G,T].
    Returns (InterlaceParams, cache).
    """
    feat = as_f64(feat)
    if feat.ndim != 5:
        raise ShapeError(f"offset net input must be [N,T,C,H,W], got rank {feat.ndim}")
    n, t, c = feat.shape[:3]
    if t != cfg.frames:
        raise ShapeError(f"feature frame axis {t} does not match config frames {cfg.frames}")
    pooled = ops.global_avg_pool_spatial(feat)  # [N,T,C]
    m = pooled.mean(axis=2)  # [N,T]
    t1 = ops.linear(m, params[prefix + "trunk.weight"], params[prefix + "trunk.bias"])
    h = np.maximum(t1, 0.0)
    zo = ops.linear(h, params[prefix + "offs.weight"], params[prefix + "offs.bias"])
    th = np.tanh(zo)
    offsets = cfg.delta_max * th
    zw = ops.linear(h, params[prefix + "wts.weight"], params[prefix + "wts.bias"])
    sg = ops.sigmoid(zw)
    weights = (2.0 * sg).reshape(n, cfg.num_groups, t)
    iparams = InterlaceParams(offsets, weights, delta_max=cfg.delta_max)
    cache = {"m": m, "t1": t1, "h": h, "th": th, "sg": sg, "feat_shape": feat.shape}
    return iparams, cache


def offset_weight_net_backward(g_offsets, g_weights, cache, params: ParamStore,
                               cfg: ModelConfig, prefix: str = "tin."):
    """Chain gradients back to the feature map; parameter grads accumulate."""
    n, t, c, hh, ww = cache["feat_shape"]
    g_zo = as_f64(g_offsets) * cfg.delta_max * (1.0 - cache["th"] ** 2)
    g_zw = as_f64(g_weights).reshape(n, -1) * 2.0 * cache["sg"] * (1.0 - cache["sg"])

    g_h = np.zeros_like(cache["h"])
    for gz, head in ((g_zo, "offs"), (g_zw, "wts")):
        gi, gw, gb = ops.linear_backward(gz, cache["h"], params[prefix + head + ".weight"])
        g_h += gi
        params.add_grad(prefix + head + ".weight", gw)
        params.add_grad(prefix + head + ".bias", gb)

    g_t1 = g_h * (cache["t1"] > 0)
    g_m, gw, gb = ops.linear_backward(g_t1, cache["m"], params[prefix + "trunk.weight"])
    params.add_grad(prefix + "trunk.weight", gw)
    params.add_grad(prefix + "trunk.bias", gb)

    g_pooled = np.broadcast_to(g_m[:, :, None] / c, (n, t, c))
    return ops.global_avg_pool_spatial_backward(g_pooled, (hh, ww))


# ---------------------------------------------------------------------------
# backbone
# ---------------------------------------------------------------------------

def _conv5(x5, w, b, stride, pad):
    """Per-frame conv2d on [N,T,C,H,W]; returns (y5, column cache)."""
    n, t = x5.shape[:2]
    y4, cols = ops.conv2d_with_cols(x5.reshape((n * t,) + x5.shape[2:]), w, b, stride, pad)
    return y4.reshape((n, t) + y4.shape[1:]), cols


def _conv5_backward(gy5, x5, w, stride, pad, cols=None):
    n, t = x5.shape[:2]
    gx4, gw, gb = ops.conv2d_backward(
        gy5.reshape((n * t,) + gy5.shape[2:]),
        x5.reshape((n * t,) + x5.shape[2:]),
        w, stride, pad, cols=cols,
    )
    return gx4.reshape(x5.shape), gw, gb


def backbone_forward(clip, params: ParamStore, cfg: ModelConfig,
                     training: bool = False, seed: int = 0, return_cache: bool = False):
    """Run the full model on [N,T,C,H,W]; returns per-class logits [N,classes]."""
    x = as_f64(clip)
    if x.ndim != 5 or x.shape[1:] != (cfg.frames, cfg.in_channels, cfg.height, cfg.width):
        raise ShapeError(
            f"clip shape {x.shape} does not match config "
            f"[N,{cfg.frames},{cfg.in_channels},{cfg.height},{cfg.width}]"
        )
    cache = {"clip": x, "blocks": []}

    x, stem_cols = _conv5(x, params["stem.weight"], params["stem.bias"], 2, 1)
    cache["stem_cols"] = stem_cols

    for i in range(cfg.num_blocks):
        bc = {"x_in": x}
        if cfg.temporal_mode == "tin":
            iparams, ocache = offset_weight_net_forward(x, params, cfg, f"block{i}.tin.")
            bc["groups"] = GroupSpec.even(x.shape[2], cfg.num_groups)
            bc["iparams"], bc["ocache"] = iparams, ocache
            xt = interlace_forward(x, bc["groups"], iparams)
        elif cfg.temporal_mode == "tsm":
            xt = tsm_shift(x, ShiftSpec(cfg.fold))
        else:
            xt = x
        bc["xt"] = xt
        a1, bc["cols1"] = _conv5(xt, params[f"block{i}.conv1.weight"], params[f"block{i}.conv1.bias"], 2, 1)
        r1 = np.maximum(a1, 0.0)
        a2, bc["cols2"] = _conv5(r1, params[f"block{i}.conv2.weight"], params[f"block{i}.conv2.bias"], 1, 1)
        skip, bc["cols_skip"] = _conv5(x, params[f"block{i}.skip.weight"], params[f"block{i}.skip.bias"], 2, 0)
        bc["a1"], bc["r1"] = a1, r1
        x = a2 + skip
        cache["blocks"].append(bc)

    cache["body_out"] = x
    if cfg.head == "pool":
        feat = x.mean(axis=(1, 3, 4))  # [N, C_last]
    else:
        feat = x.mean(axis=(3, 4)).reshape(x.shape[0] * cfg.frames, -1)  # [N*T, C_last]
    mask = ops.dropout_mask(feat.shape, cfg.dropout, seed) if training else None
    fd = feat * mask if mask is not None else feat
    cache["feat"], cache["mask"], cache["fd"] = feat, mask, fd

    logits = ops.linear(fd, params["head.weight"], params["head.bias"])
    if cfg.head == "consensus":
        logits = segment_consensus(logits.reshape(x.shape[0], cfg.frames, -1))
    return (logits, cache) if return_cache else logits


def backbone_backward(g_logits, cache, params: ParamStore, cfg: ModelConfig):
    """Accumulate parameter gradients; returns the gradient w.r.t. the clip."""
    x = cache["body_out"]
    n, t = x.shape[:2]
    g_logits = as_f64(g_logits)

    if cfg.head == "consensus":
        g_head_in = segment_consensus_backward(g_logits, t).reshape(n * t, -1)
    else:
        g_head_in = g_logits
    g_fd, gw, gb = ops.linear_backward(g_head_in, cache["fd"], params["head.weight"])
    params.add_grad("head.weight", gw)
    params.add_grad("head.bias", gb)
    g_feat = g_fd * cache["mask"] if cache["mask"] is not None else g_fd

    _, _, c_last, hh, ww = x.shape
    if cfg.head == "pool":
        g_x = np.broadcast_to(
            g_feat[:, None, :, None, None] / (t * hh * ww), x.shape
        ).copy()
    else:
        g_x = np.broadcast_to(
            g_feat.reshape(n, t, c_last)[:, :, :, None, None] / (hh * ww), x.shape
        ).copy()

    for i in reversed(range(cfg.num_blocks)):
        bc = cache["blocks"][i]
        g_skip_in, gw, gb = _conv5_backward(
            g_x, bc["x_in"], params[f"block{i}.skip.weight"], 2, 0, bc["cols_skip"]
        )
        params.add_grad(f"block{i}.skip.weight", gw)
        params.add_grad(f"block{i}.skip.bias", gb)

        g_r1, gw, gb = _conv5_backward(
            g_x, bc["r1"], params[f"block{i}.conv2.weight"], 1, 1, bc["cols2"]
        )
        params.add_grad(f"block{i}.conv2.weight", gw)
        params.add_grad(f"block{i}.conv2.bias", gb)
        g_a1 = g_r1 * (bc["a1"] > 0)
        g_xt, gw, gb = _conv5_backward(
            g_a1, bc["xt"], params[f"block{i}.conv1.weight"], 2, 1, bc["cols1"]
        )
        params.add_grad(f"block{i}.conv1.weight", gw)
        params.add_grad(f"block{i}.conv1.bias", gb)

        if cfg.temporal_mode == "tin":
            g_main, g_off, g_wts = interlace_backward(g_xt, bc["x_in"], bc["groups"], bc["iparams"])
            g_from_net = offset_weight_net_backward(
                g_off, g_wts, bc["ocache"], params, cfg, f"block{i}.tin."
            )
            g_x = g_main + g_from_net + g_skip_in
        elif cfg.temporal_mode == "tsm":
            g_x = tsm_shift_backward(g_xt, ShiftSpec(cfg.fold)) + g_skip_in
        else:
            g_x = g_xt + g_skip_in

    g_clip, gw, gb = _conv5_backward(g_x, cache["clip"], params["stem.weight"], 2, 1,
                                     cache["stem_cols"])
    params.add_grad("stem.weight", gw)
    params.add_grad("stem.bias", gb)
    return g_clip


def predict_clip(logits) -> np.ndarray:
    """Per-class probabilities: elementwise sigmoid of the logits."""
    return ops.sigmoid(logits)
