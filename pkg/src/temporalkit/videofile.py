"""Raw-frame video container and view materialization.

File layout (all integers little-endian u32):

    magic "XVID" | version | T | H | W | C | T*H*W*C pixel bytes (u8)

Pixels are frame-major, each frame stored H rows by W columns by C channels.
Loading maps u8 to float64 via /255. The format exists so that temporal
reversal pairs can be compared byte for byte, with no codec in the way.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .sampling import View

MAGIC = b"XVID"
VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


class VideoFormatError(ValueError):
    pass


def write_video(path, frames: np.ndarray) -> None:
    """Write [T,H,W,C] u8 frames."""
    frames = np.ascontiguousarray(frames, dtype=np.uint8)
    if frames.ndim != 4:
        raise VideoFormatError(f"frames must be [T,H,W,C], got rank {frames.ndim}")
    t, h, w, c = frames.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, t, h, w, c))
        fh.write(frames.tobytes())


def read_header(path) -> tuple[int, int, int, int]:
    """(T, H, W, C) from the file header."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise VideoFormatError(f"{path}: truncated header")
    magic, version, t, h, w, c = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise VideoFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VideoFormatError(f"{path}: unsupported version {version}")
    return t, h, w, c


def read_video(path) -> np.ndarray:
    """Read back [T,H,W,C] u8 frames."""
    t, h, w, c = read_header(path)
    expected = t * h * w * c
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        data = fh.read()
    if len(data) != expected:
        raise VideoFormatError(f"{path}: payload is {len(data)} bytes, header implies {expected}")
    return np.frombuffer(data, dtype=np.uint8).reshape(t, h, w, c)


def load_video(path) -> np.ndarray:
    """Frames as float64 in [0,1], shape [T,H,W,C]."""
    return read_video(path).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# resizing and view materialization
# ---------------------------------------------------------------------------

def resize_frames(frames: np.ndarray, short_side: int, method: str = "bilinear") -> np.ndarray:
    """Resize [T,H,W,C] float frames so the short side equals short_side.

    Bilinear uses half-pixel sample centers; nearest is available when tests
    need exact pixel copies.
    """
    if method not in ("bilinear", "nearest"):
        raise ValueError(f"unknown resize method {method!r}")
    t, h, w, c = frames.shape
    if h <= w:
        oh, ow = short_side, max(1, round(w * short_side / h))
    else:
        oh, ow = max(1, round(h * short_side / w)), short_side
    if (oh, ow) == (h, w):
        return frames
    if method == "nearest":
        ri = np.minimum((np.arange(oh) + 0.5) * h / oh, h - 1).astype(int)
        ci = np.minimum((np.arange(ow) + 0.5) * w / ow, w - 1).astype(int)
        return frames[:, ri][:, :, ci]

    def axis_weights(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
        lo = np.clip(np.floor(pos), 0, n_in - 1).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = np.clip(pos - lo, 0.0, 1.0)
        return lo, hi, frac

    rlo, rhi, rf = axis_weights(h, oh)
    clo, chi, cf = axis_weights(w, ow)
    top = frames[:, rlo] * (1 - rf)[None, :, None, None] + frames[:, rhi] * rf[None, :, None, None]
    out = top[:, :, clo] * (1 - cf)[None, None, :, None] + top[:, :, chi] * cf[None, None, :, None]
    return out


def materialize_view(frames: np.ndarray, view: View, method: str = "bilinear") -> np.ndarray:
    """Apply a View to float [T,H,W,C] frames -> clip [T_view, C, size, size]."""
    clip = frames[list(view.frame_indices)]
    clip = resize_frames(clip, view.scale, method)
    x, y, size = view.crop
    h, w = clip.shape[1:3]
    x = min(x, w - size)
    y = min(y, h - size)
    if x < 0 or y < 0:
        raise ValueError(f"crop {view.crop} does not fit scaled frame {h}x{w}")
    clip = clip[:, y : y + size, x : x + size, :]
    if view.flip:
        clip = clip[:, :, ::-1, :]
    return np.ascontiguousarray(clip.transpose(0, 3, 1, 2))
