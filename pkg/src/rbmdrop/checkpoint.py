"""Flat binary checkpoint format for trained models.

Layout (little-endian):

    4 bytes   magic b"RBMC"
    u32       format version (currently 1)
    u32       m (visible units)
    u32       n (hidden units)
    u64       seed the run was trained under
    u32       epochs completed
    f64[m*n]  weights, row-major
    f64[m]    visible biases
    f64[n]    hidden biases

Anything that does not parse exactly raises DataFormatError.
"""

import struct
from pathlib import Path

import numpy as np

from rbmdrop.errors import DataFormatError
from rbmdrop.rbm import RbmParams

MAGIC = b"RBMC"
VERSION = 1

_HEADER = struct.Struct("<4sIIIQI")


def save_checkpoint(path, params: RbmParams, seed: int, epochs: int) -> None:
    """Write params plus run provenance (seed, epoch count) to `path`."""
    m, n = params.m, params.n
    header = _HEADER.pack(MAGIC, VERSION, m, n, seed, epochs)
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for arr in (params.weights, params.visible_bias, params.hidden_bias)
    )
    Path(path).write_bytes(header + payload)


def load_checkpoint(path) -> tuple[RbmParams, int, int]:
    """Read a checkpoint; returns (params, seed, epochs)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, m, n, seed, epochs = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + 8 * (m * n + m + n)
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(raw)} bytes, expected {expected} "
            f"for a {m}x{n} model"
        )
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).copy()
    weights = flat[: m * n].reshape(m, n)
    visible_bias = flat[m * n : m * n + m]
    hidden_bias = flat[m * n + m :]
    return RbmParams(weights, visible_bias, hidden_bias), seed, epochs
