"""Field snapshot files.

Binary format: magic bytes "RDVI1", then dim and per-axis interior node
counts as unsigned 32-bit little-endian, then the nodal values as 64-bit
IEEE floats, little-endian, row-major. CSV export writes one line per
node: "x[,y],value".
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .mesh import Field, Grid

MAGIC = b"RDVI1"


def save_field(path, f: Field) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", f.grid.dim))
        fh.write(struct.pack("<" + "I" * f.grid.dim, *f.grid.n))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_raw(path) -> tuple[int, tuple[int, ...], np.ndarray]:
    """Read (dim, per-axis counts, values) from a snapshot file."""
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise ConfigurationError(f"{path}: not a field snapshot (bad magic)")
    (dim,) = struct.unpack_from("<I", data, 5)
    if dim not in (1, 2):
        raise ConfigurationError(f"{path}: unsupported dim {dim}")
    n = struct.unpack_from("<" + "I" * dim, data, 9)
    offset = 9 + 4 * dim
    count = 1
    for k in n:
        count *= k
    values = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
    if values.size != count:
        raise ConfigurationError(f"{path}: truncated snapshot")
    return dim, n, values.astype(float)


def load_field(path, grid: Grid) -> Field:
    dim, n, values = read_raw(path)
    if dim != grid.dim or tuple(n) != grid.n:
        raise ConfigurationError(
            f"{path}: snapshot shape {n} does not match grid {grid.n}")
    return Field(grid, values)


def field_to_csv(path, f: Field) -> None:
    pts = f.grid.coords()
    with open(path, "w") as fh:
        for row, value in zip(pts, f.values):
            coords = ",".join(repr(float(c)) for c in row)
            fh.write(f"{coords},{float(value)!r}\n")
