"""Bit-exact named-tensor checkpoints.

Layout (little-endian):

    magic "XTCK" | version u32 | tensor count u32
    per tensor: name length u32 | UTF-8 name | rank u32 | dims u32... | float64 data

Entry order is preserved on load, so save -> load -> save reproduces the file
byte for byte. Optimizer state (velocity buffers, iteration counter) lives
under the reserved "__opt__/" name prefix next to the parameters.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"XTCK"
VERSION = 1
OPT_PREFIX = "__opt__/"
ITER_KEY = OPT_PREFIX + "iter"
VEL_PREFIX = OPT_PREFIX + "vel/"


class CheckpointFormatError(ValueError):
    pass


def save_checkpoint(path, entries: list[tuple[str, np.ndarray]]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(entries)))
        for name, arr in entries:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> list[tuple[str, np.ndarray]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {data[:4]!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    pos = 12
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", data, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(dims).copy()
        pos += 8 * n
        entries.append((name, arr))
    if pos != len(data):
        raise CheckpointFormatError(f"{path}: {len(data) - pos} trailing bytes")
    return entries


def pack_training_state(params, velocity: dict, iteration: int) -> list[tuple[str, np.ndarray]]:
    """Parameters in store order, then the iteration counter and velocities."""
    entries = [(name, params.values[name]) for name in params.names()]
    entries.append((ITER_KEY, np.array([float(iteration)])))
    for name in params.names():
        vel = velocity.get(name)
        entries.append((VEL_PREFIX + name, vel if vel is not None else np.zeros_like(params[name])))
    return entries


def unpack_training_state(entries):
    """Returns (param dict, velocity dict, iteration); plain params get
    everything when no optimizer section is present."""
    param_values, velocity, iteration = {}, {}, 0
    for name, arr in entries:
        if name == ITER_KEY:
            iteration = int(arr.ravel()[0])
        elif name.startswith(VEL_PREFIX):
            velocity[name[len(VEL_PREFIX) :]] = arr
        elif name.startswith(OPT_PREFIX):
            raise CheckpointFormatError(f"unknown reserved entry {name!r}")
        else:
            param_values[name] = arr
    return param_values, velocity, iteration
