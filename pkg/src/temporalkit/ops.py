"""Dense tensor primitives with hand-derived backward passes.

All arrays are float64, row-major numpy. Every op is a pure function; the
backward companions take the upstream gradient plus whatever the forward
saw, and return gradients for each differentiable input in argument order.
No graph, no tape: callers chain backwards by hand.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """An operand's dimensions do not conform; the message names the axis."""


def as_f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# conv2d
# ---------------------------------------------------------------------------

def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    xp[:, :, pad : pad + h, pad : pad + w] = x
    return xp


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Unfold padded input [N,C,Hp,Wp] into columns [C*kh*kw, N*L].

    This layout feeds one large GEMM instead of N small ones.
    """
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sn, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(c, kh, kw, n, ho, wo),
        strides=(sc, sh, sw, sn, sh * stride, sw * stride),
        writeable=False,
    )
    return view.reshape(c * kh * kw, n * ho * wo)


def _col2im(gcols: np.ndarray, padded_shape, kh: int, kw: int, stride: int) -> np.ndarray:
    """Fold column gradients [C*kh*kw, N*L] back onto the padded input."""
    n, c, hp, wp = padded_shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    g6 = gcols.reshape(c, kh, kw, n, ho, wo)
    gxp = np.zeros((c, n, hp, wp), dtype=np.float64)  # channel-major while scattering
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += g6[:, i, j]
    return np.ascontiguousarray(gxp.swapaxes(0, 1))


def _check_conv_args(x, kernel, bias, stride, pad):
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be rank 4 [N,C,H,W], got rank {x.ndim}")
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d kernel must be rank 4 [Co,Ci,kH,kW], got rank {kernel.ndim}")
    if kernel.shape[1] != x.shape[1]:
        raise ShapeError(
            f"conv2d channel axis mismatch: input C={x.shape[1]}, kernel C_in={kernel.shape[1]}"
        )
    if bias.shape != (kernel.shape[0],):
        raise ShapeError(
            f"conv2d bias axis mismatch: expected ({kernel.shape[0]},), got {bias.shape}"
        )
    if stride < 1:
        raise ValueError(f"conv2d stride must be positive, got {stride}")
    if pad < 0:
        raise ValueError(f"conv2d pad must be non-negative, got {pad}")
    if x.shape[2] + 2 * pad < kernel.shape[2]:
        raise ShapeError(
            f"conv2d height axis too small: H={x.shape[2]} + 2*pad={pad} < kH={kernel.shape[2]}"
        )
    if x.shape[3] + 2 * pad < kernel.shape[3]:
        raise ShapeError(
            f"conv2d width axis too small: W={x.shape[3]} + 2*pad={pad} < kW={kernel.shape[3]}"
        )


def conv2d_with_cols(x, kernel, bias, stride: int = 1, pad: int = 0):
    """conv2d that also returns the unfolded columns for reuse in backward."""
    x, kernel, bias = as_f64(x), as_f64(kernel), as_f64(bias)
    _check_conv_args(x, kernel, bias, stride, pad)
    n = x.shape[0]
    co, _, kh, kw = kernel.shape
    xp = _pad_hw(x, pad)
    ho = (xp.shape[2] - kh) // stride + 1
    wo = (xp.shape[3] - kw) // stride + 1
    cols = _im2col(xp, kh, kw, stride)
    y = kernel.reshape(co, -1) @ cols + bias[:, None]
    return np.ascontiguousarray(y.reshape(co, n, ho, wo).swapaxes(0, 1)), cols


def conv2d(x, kernel, bias, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlate [N,Ci,H,W] with [Co,Ci,kH,kW] -> [N,Co,H',W']."""
    return conv2d_with_cols(x, kernel, bias, stride, pad)[0]


def conv2d_backward(gy, x, kernel, stride: int = 1, pad: int = 0, cols=None):
    """Gradients (gx, gkernel, gbias) of a scalar loss through conv2d.

    `cols` accepts the column matrix from conv2d_with_cols to skip the
    second unfold; results are identical either way.
    """
    gy, x, kernel = as_f64(gy), as_f64(x), as_f64(kernel)
    n, _, h, w = x.shape
    co, _, kh, kw = kernel.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    if cols is None:
        cols = _im2col(_pad_hw(x, pad), kh, kw, stride)
    gy_big = np.ascontiguousarray(gy.swapaxes(0, 1).reshape(co, -1))

    gw = (gy_big @ cols.T).reshape(kernel.shape)
    gb = gy.sum(axis=(0, 2, 3))

    gcols = kernel.reshape(co, -1).T @ gy_big
    gxp = _col2im(gcols, (n, kernel.shape[1], hp, wp), kh, kw, stride)
    gx = gxp[:, :, pad : pad + h, pad : pad + w] if pad else gxp
    return gx, gw, gb


# ---------------------------------------------------------------------------
# linear
# ---------------------------------------------------------------------------

def linear(x, weight, bias) -> np.ndarray:
    """out[n,k] = sum_d x[n,d] * weight[k,d] + bias[k]."""
    x, weight, bias = as_f64(x), as_f64(weight), as_f64(bias)
    if x.ndim != 2 or weight.ndim != 2:
        raise ShapeError(f"linear expects rank-2 operands, got {x.ndim} and {weight.ndim}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"linear feature axis mismatch: input D={x.shape[1]}, weight D={weight.shape[1]}"
        )
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear bias axis mismatch: expected ({weight.shape[0]},), got {bias.shape}")
    return x @ weight.T + bias


def linear_backward(gy, x, weight):
    gy = as_f64(gy)
    return gy @ weight, gy.T @ x, gy.sum(axis=0)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

ACTIVATION_KINDS = ("relu", "sigmoid", "tanh")


def sigmoid(x) -> np.ndarray:
    # Stable on both tails: never exponentiates a large positive argument.
    x = as_f64(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation(x, kind: str) -> np.ndarray:
    x = as_f64(x)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation kind {kind!r}")


def activation_backward(gy, x, y, kind: str) -> np.ndarray:
    """Chain gy through the activation; y is the saved forward output."""
    gy = as_f64(gy)
    if kind == "relu":
        return gy * (x > 0)
    if kind == "sigmoid":
        return gy * y * (1.0 - y)
    if kind == "tanh":
        return gy * (1.0 - y * y)
    raise ValueError(f"unknown activation kind {kind!r}")


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

def global_avg_pool_spatial(x) -> np.ndarray:
    """Mean over H,W of [N,T,C,H,W] -> [N,T,C]."""
    x = as_f64(x)
    if x.ndim != 5:
        raise ShapeError(f"global_avg_pool_spatial expects rank 5, got {x.ndim}")
    return x.mean(axis=(3, 4))


def global_avg_pool_spatial_backward(gy, spatial_shape) -> np.ndarray:
    h, w = spatial_shape
    gy = as_f64(gy)
    return np.broadcast_to(gy[:, :, :, None, None] / (h * w), gy.shape + (h, w)).copy()


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def dropout_mask(shape, rate: float, seed: int) -> np.ndarray:
    """Seeded keep-mask, survivors pre-scaled by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {rate}")
    if rate == 0.0:
        return np.ones(shape, dtype=np.float64)
    rng = np.random.default_rng(seed)
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def dropout(x, rate: float, seed: int, training: bool) -> np.ndarray:
    """Zero elements with probability `rate` and rescale; identity in eval."""
    x = as_f64(x)
    if not training or rate == 0.0:
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0,1), got {rate}")
        return x
    return x * dropout_mask(x.shape, rate, seed)
