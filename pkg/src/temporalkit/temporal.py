"""Temporal mixing operators: learned fractional interlacing, fixed integer
channel shifting, and segment consensus.

The interlace operator is the differentiable one: per sample and channel
group it shifts frames by a real-valued offset (two-tap linear interpolation,
zero padding outside the clip) and rescales every temporal position by a
learned weight. Sign convention, pinned here and by the tests: a positive
offset samples from the future, y[t] draws on x[t + o].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ops import ShapeError, as_f64


@dataclass(frozen=True)
class GroupSpec:
    """Contiguous, disjoint channel intervals [start, stop) covering [0, C)."""

    ranges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.ranges:
            raise ValueError("GroupSpec needs at least one group")
        prev = 0
        for i, (start, stop) in enumerate(self.ranges):
            if start != prev:
                raise ValueError(f"group {i} starts at {start}, expected {prev} (gaps/overlap)")
            if stop <= start:
                raise ValueError(f"group {i} is empty: [{start}, {stop})")
            prev = stop

    @property
    def num_groups(self) -> int:
        return len(self.ranges)

    @property
    def num_channels(self) -> int:
        return self.ranges[-1][1]

    @classmethod
    def even(cls, channels: int, num_groups: int) -> "GroupSpec":
        """Near-even contiguous split; earlier groups take the remainder."""
        if num_groups < 1 or num_groups > channels:
            raise ValueError(f"cannot split {channels} channels into {num_groups} groups")
        base, rem = divmod(channels, num_groups)
        ranges, start = [], 0
        for g in range(num_groups):
            stop = start + base + (1 if g < rem else 0)
            ranges.append((start, stop))
            start = stop
        return cls(tuple(ranges))


@dataclass
class InterlaceParams:
    """Per-sample fractional offsets [N,G] (frames) and weights [N,G,T]."""

    offsets: np.ndarray
    weights: np.ndarray
    delta_max: float

    def __post_init__(self):
        self.offsets = as_f64(self.offsets)
        self.weights = as_f64(self.weights)
        if self.offsets.ndim != 2:
            raise ShapeError(f"offsets must be [N,G], got rank {self.offsets.ndim}")
        if self.weights.ndim != 3:
            raise ShapeError(f"weights must be [N,G,T], got rank {self.weights.ndim}")
        if self.weights.shape[:2] != self.offsets.shape:
            raise ShapeError(
                f"weights N,G axes {self.weights.shape[:2]} do not match offsets {self.offsets.shape}"
            )
        if self.delta_max <= 0:
            raise ValueError(f"delta_max must be positive, got {self.delta_max}")
        if np.any(np.abs(self.offsets) > self.delta_max):
            worst = float(np.max(np.abs(self.offsets)))
            raise ValueError(f"offset magnitude {worst} exceeds delta_max {self.delta_max}")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")


@dataclass(frozen=True)
class ShiftSpec:
    """Fraction of channels shifted one frame each direction."""

    fold: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.fold <= 0.5:
            raise ValueError(f"fold fraction must be in (0, 0.5], got {self.fold}")

    def fold_channels(self, channels: int) -> int:
        fc = math.ceil(channels * self.fold)
        if 2 * fc > channels:
            raise ValueError(
                f"fold {self.fold} shifts 2*{fc} channels but only {channels} exist"
            )
        return fc


def _shift_frames(x: np.ndarray, k: int) -> np.ndarray:
    """out[t] = x[t+k] with zero padding outside [0, T-1]; x is [T, ...]."""
    t = x.shape[0]
    out = np.zeros_like(x)
    if k >= t or k <= -t:
        return out
    if k >= 0:
        out[: t - k] = x[k:]
    else:
        out[-k:] = x[: t + k]
    return out


def _check_interlace_shapes(x, groups: GroupSpec, params: InterlaceParams):
    if x.ndim != 5:
        raise ShapeError(f"interlace input must be [N,T,C,H,W], got rank {x.ndim}")
    n, t, c = x.shape[:3]
    if groups.num_channels != c:
        raise ShapeError(
            f"group ranges cover {groups.num_channels} channels, input has {c}"
        )
    if params.offsets.shape != (n, groups.num_groups):
        raise ShapeError(
            f"offsets shape {params.offsets.shape} does not match (N,G)=({n},{groups.num_groups})"
        )
    if params.weights.shape != (n, groups.num_groups, t):
        raise ShapeError(
            f"weights shape {params.weights.shape} does not match (N,G,T)=({n},{groups.num_groups},{t})"
        )


def interlace_forward(x, groups: GroupSpec, params: InterlaceParams) -> np.ndarray:
    """Shift each channel group by its fractional offset, then reweight frames.

    For offset o with k = floor(o), a = o - k:
        y[t] = w[t] * ((1-a) * x~[t+k] + a * x~[t+k+1])
    where x~ is x zero-padded outside the clip. Output shape equals input.
    """
    x = as_f64(x)
    _check_interlace_shapes(x, groups, params)
    n = x.shape[0]
    y = np.empty_like(x)
    for i in range(n):
        for g, (c0, c1) in enumerate(groups.ranges):
            o = params.offsets[i, g]
            k = math.floor(o)  # mathematical floor keeps a in [0,1) for o < 0
            a = o - k
            xg = x[i, :, c0:c1]
            if a == 0.0:
                interp = _shift_frames(xg, k)
            else:
                interp = (1.0 - a) * _shift_frames(xg, k) + a * _shift_frames(xg, k + 1)
            y[i, :, c0:c1] = params.weights[i, g][:, None, None, None] * interp
    return y


def interlace_backward(gy, x, groups: GroupSpec, params: InterlaceParams):
    """Gradients (gx, goffsets, gweights) through interlace_forward.

    The offset gradient follows the interpolation's piecewise-linear form;
    at exact integer offsets the floor branch's one-sided derivative is used.
    """
    gy, x = as_f64(gy), as_f64(x)
    _check_interlace_shapes(x, groups, params)
    n = x.shape[0]
    gx = np.zeros_like(x)
    goff = np.zeros_like(params.offsets)
    gw = np.zeros_like(params.weights)
    for i in range(n):
        for g, (c0, c1) in enumerate(groups.ranges):
            o = params.offsets[i, g]
            k = math.floor(o)
            a = o - k
            xg = x[i, :, c0:c1]
            gyg = gy[i, :, c0:c1]
            w = params.weights[i, g]

            near = _shift_frames(xg, k)
            far = _shift_frames(xg, k + 1)
            interp = near if a == 0.0 else (1.0 - a) * near + a * far

            gw[i, g] = (gyg * interp).sum(axis=(1, 2, 3))
            wg = w[:, None, None, None] * gyg
            goff[i, g] = (wg * (far - near)).sum()
            gx[i, :, c0:c1] = (1.0 - a) * _shift_frames(wg, -k) + a * _shift_frames(wg, -(k + 1))
    return gx, goff, gw


def tsm_shift(x, spec: ShiftSpec) -> np.ndarray:
    """Shift the first fold of channels from t+1, the second fold from t-1."""
    x = as_f64(x)
    if x.ndim != 5:
        raise ShapeError(f"tsm_shift input must be [N,T,C,H,W], got rank {x.ndim}")
    fc = spec.fold_channels(x.shape[2])
    y = np.zeros_like(x)
    y[:, :-1, :fc] = x[:, 1:, :fc]
    y[:, 1:, fc : 2 * fc] = x[:, :-1, fc : 2 * fc]
    y[:, :, 2 * fc :] = x[:, :, 2 * fc :]
    return y


def tsm_shift_backward(gy, spec: ShiftSpec) -> np.ndarray:
    """Transpose shift: routes gradients back to their source frames."""
    gy = as_f64(gy)
    fc = spec.fold_channels(gy.shape[2])
    gx = np.zeros_like(gy)
    gx[:, 1:, :fc] = gy[:, :-1, :fc]
    gx[:, :-1, fc : 2 * fc] = gy[:, 1:, fc : 2 * fc]
    gx[:, :, 2 * fc :] = gy[:, :, 2 * fc :]
    return gx


def segment_consensus(logits) -> np.ndarray:
    """Average per-segment logits [N,K,C] -> [N,C].

    Summation runs in value-sorted order, so the result is bitwise invariant
    under any permutation of the segments.
    """
    logits = as_f64(logits)
    if logits.ndim != 3:
        raise ShapeError(f"segment_consensus expects [N,K,C], got rank {logits.ndim}")
    return np.sort(logits, axis=1).mean(axis=1)


def segment_consensus_backward(gy, num_segments: int) -> np.ndarray:
    gy = as_f64(gy)
    return np.broadcast_to(gy[:, None, :] / num_segments, (gy.shape[0], num_segments, gy.shape[1])).copy()
