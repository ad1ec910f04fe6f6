"""Field snapshot files: 64-byte header + raw little-endian float64 samples.

Header layout (little endian): magic "NSKFLD01" (8 bytes), dimension
(uint8, 3 pad bytes), points per axis (3 x uint32), box length per axis
(3 x float64), quantity tag (16 bytes, NUL padded).  Sample data follows in
x-fastest order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import MalformedArtifact
from .spectral import SpectralGrid

MAGIC = b"NSKFLD01"
_HEADER = struct.Struct("<8sB3x3I3d16s")
assert _HEADER.size == 64


def write_field(path, grid: SpectralGrid, data: np.ndarray, tag: str) -> None:
    ns = list(grid.shape) + [1] * (3 - grid.dim)
    ls = [grid.length] * grid.dim + [0.0] * (3 - grid.dim)
    header = _HEADER.pack(MAGIC, grid.dim, *ns, *ls, tag.encode()[:16])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(data, dtype="<f8").ravel(order="F").tobytes())


def read_field(path):
    """Returns (data, meta) with meta = {dim, n, length, tag}."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise MalformedArtifact(f"{path}: shorter than the 64-byte header")
    magic, dim, n0, n1, n2, l0, l1, l2, tag = _HEADER.unpack(raw[:_HEADER.size])
    if magic != MAGIC:
        raise MalformedArtifact(f"{path}: bad magic {magic!r}")
    if dim not in (1, 2, 3):
        raise MalformedArtifact(f"{path}: bad dimension {dim}")
    ns = (n0, n1, n2)[:dim]
    payload = np.frombuffer(raw[_HEADER.size:], dtype="<f8")
    expected = int(np.prod(ns))
    if payload.size != expected:
        raise MalformedArtifact(
            f"{path}: expected {expected} samples, found {payload.size}")
    data = payload.reshape(ns, order="F")
    meta = {"dim": dim, "n": ns, "length": (l0, l1, l2)[:dim],
            "tag": tag.rstrip(b"\x00").decode()}
    return data, meta
