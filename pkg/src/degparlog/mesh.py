"""Uniform tensor grids, grid functions, the discrete Dirichlet Laplacian,
norms, and domain/coefficient sampling.

Grids are intervals (1D) or axis-aligned rectangles (2D) with zero
Dirichlet data on the boundary. Interior nodes along each axis are
x_i = lo + i*h, i = 1..n, with h = (hi - lo)/(n + 1); only interior values
are stored, row-major (x outer, y inner). All values here are immutable
after construction and the operations are pure, so they are safe to share
across concurrent solver runs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigurationError

__all__ = [
    "Grid",
    "Field",
    "Mask",
    "DomainSpec",
    "build_grid",
    "apply_laplacian",
    "norm",
    "sample_domain",
    "smallest_laplacian_eigenvalue",
]


@dataclass(frozen=True)
class Grid:
    """Uniform tensor mesh of an interval or rectangle, interior nodes only."""

    dim: int
    extents: tuple[tuple[float, float], ...]
    n: tuple[int, ...]
    h: tuple[float, ...]

    @property
    def n_total(self) -> int:
        total = 1
        for k in self.n:
            total *= k
        return total

    @property
    def cell_volume(self) -> float:
        vol = 1.0
        for hk in self.h:
            vol *= hk
        return vol

    @property
    def domain_volume(self) -> float:
        vol = 1.0
        for lo, hi in self.extents:
            vol *= hi - lo
        return vol

    def axis_coords(self, axis: int) -> np.ndarray:
        lo, _ = self.extents[axis]
        return lo + self.h[axis] * np.arange(1, self.n[axis] + 1)

    def coords(self) -> np.ndarray:
        """Interior node coordinates, shape (n_total, dim), row-major."""
        axes = [self.axis_coords(k) for k in range(self.dim)]
        if self.dim == 1:
            return axes[0][:, None]
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def _kernel_shape(self) -> tuple[int, int, float, float]:
        """(nx, ny, 1/hx^2, 1/hy^2) with ny = 1, 1/hy^2 = 0 in 1D."""
        if self.dim == 1:
            return self.n[0], 1, 1.0 / self.h[0] ** 2, 0.0
        return self.n[0], self.n[1], 1.0 / self.h[0] ** 2, 1.0 / self.h[1] ** 2


def build_grid(dim, extents, n_interior) -> Grid:
    """Build a uniform grid; extents and n_interior accept per-axis tuples
    or bare values in 1D."""
    if dim not in (1, 2):
        raise ConfigurationError(f"dim must be 1 or 2, got {dim}")
    if dim == 1:
        if np.ndim(extents) == 1:
            extents = (tuple(extents),)
        if np.ndim(n_interior) == 0:
            n_interior = (int(n_interior),)
    extents = tuple((float(lo), float(hi)) for lo, hi in extents)
    n_interior = tuple(int(k) for k in n_interior)
    if len(extents) != dim or len(n_interior) != dim:
        raise ConfigurationError(
            f"need {dim} extents and node counts, got {len(extents)} and {len(n_interior)}")
    for lo, hi in extents:
        if not hi > lo:
            raise ConfigurationError(f"extent ({lo}, {hi}) is empty")
    for k in n_interior:
        if k < 1:
            raise ConfigurationError(f"interior node count must be >= 1, got {k}")
    h = tuple((hi - lo) / (k + 1) for (lo, hi), k in zip(extents, n_interior))
    return Grid(dim=dim, extents=extents, n=n_interior, h=h)


def _frozen_array(values, n_total: int, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype).ravel()
    if arr.size != n_total:
        raise ConfigurationError(f"expected {n_total} nodal values, got {arr.size}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Field:
    """Grid function: one value per interior node, zero on the boundary."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, self.grid.n_total)
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("field values must be finite")
        object.__setattr__(self, "values", arr)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.n_total))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.n_total, float(value)))

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "Field":
        pts = grid.coords()
        if grid.dim == 1:
            return cls(grid, fn(pts[:, 0]))
        return cls(grid, fn(pts[:, 0], pts[:, 1]))


@dataclass(frozen=True, eq=False)
class Mask:
    """Boolean node subset with its cell-volume measure."""

    grid: Grid
    flags: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "flags",
                           _frozen_array(self.flags, self.grid.n_total, dtype=bool))

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.flags))

    @property
    def measure(self) -> float:
        return self.count * self.grid.cell_volume

    def complement(self) -> "Mask":
        return Mask(self.grid, ~self.flags)


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Domain geometry plus absorption coefficient sampling.

    constraint_mask is true exactly at nodes outside every omega0 box
    (nodes on a box edge count as outside); b_values vanish strictly
    inside the boxes and b_inf_off_omega0 is their infimum over the
    constrained nodes (+inf when no node is constrained).
    """

    grid: Grid
    omega0: tuple[tuple[tuple[float, float], ...], ...]
    b_kind: str
    b_values: np.ndarray
    constraint_mask: Mask
    b_inf_off_omega0: float = field(init=False)

    def __post_init__(self):
        b = _frozen_array(self.b_values, self.grid.n_total)
        if np.any(b < 0):
            raise ConfigurationError("b must be nonnegative")
        object.__setattr__(self, "b_values", b)
        flags = self.constraint_mask.flags
        if np.any(b[~flags] != 0.0):
            raise ConfigurationError("b must vanish at nodes inside omega0")
        b_inf = float(b[flags].min()) if flags.any() else math.inf
        if flags.any() and b_inf <= 0.0:
            raise ConfigurationError(
                "b must be bounded away from 0 on the constrained region")
        object.__setattr__(self, "b_inf_off_omega0", b_inf)


def _normalize_boxes(grid: Grid, omega0_boxes):
    boxes = []
    for box in omega0_boxes:
        if grid.dim == 1 and np.ndim(box) == 1:
            box = (tuple(box),)
        box = tuple((float(lo), float(hi)) for lo, hi in box)
        if len(box) != grid.dim:
            raise ConfigurationError(f"omega0 box {box} has wrong dimension")
        for axis, (lo, hi) in enumerate(box):
            glo, ghi = grid.extents[axis]
            if not (lo < hi):
                raise ConfigurationError(f"omega0 box {box} is empty on axis {axis}")
            if lo < glo or hi > ghi:
                raise ConfigurationError(f"omega0 box {box} leaves the domain")
        boxes.append(box)
    return tuple(boxes)


def _inside_any_box(grid: Grid, boxes) -> np.ndarray:
    """Strictly-inside indicator; a node on a box edge is not inside."""
    pts = grid.coords()
    inside = np.zeros(grid.n_total, dtype=bool)
    for box in boxes:
        in_box = np.ones(grid.n_total, dtype=bool)
        for axis, (lo, hi) in enumerate(box):
            in_box &= (pts[:, axis] > lo) & (pts[:, axis] < hi)
        inside |= in_box
    return inside


def sample_domain(grid: Grid, omega0_boxes=(), b_kind="constant", b0=1.0,
                  b_samples=None) -> DomainSpec:
    """Sample the absorption coefficient and the constrained-node mask.

    b_kind: "constant" (b = b0, omega0 must be empty), "indicator"
    (b = b0 off omega0, 0 strictly inside), or "samples" (per-node values
    that must vanish strictly inside omega0).
    """
    boxes = _normalize_boxes(grid, omega0_boxes)
    inside = _inside_any_box(grid, boxes)
    if b_kind == "constant":
        if boxes:
            raise ConfigurationError("constant b requires empty omega0; use indicator")
        if b0 <= 0:
            raise ConfigurationError("constant b needs b0 > 0")
        b = np.full(grid.n_total, float(b0))
    elif b_kind == "indicator":
        if b0 <= 0:
            raise ConfigurationError("indicator b needs b0 > 0")
        b = np.where(inside, 0.0, float(b0))
    elif b_kind == "samples":
        if b_samples is None:
            raise ConfigurationError("b_kind 'samples' needs per-node b_samples")
        b = np.asarray(b_samples, dtype=float).ravel().copy()
        if b.size != grid.n_total:
            raise ConfigurationError("b_samples has wrong length")
        if np.any(b[inside] != 0.0):
            raise ConfigurationError("b_samples must vanish strictly inside omega0")
    else:
        raise ConfigurationError(f"unknown b_kind {b_kind!r}")
    return DomainSpec(grid=grid, omega0=boxes, b_kind=b_kind, b_values=b,
                      constraint_mask=Mask(grid, ~inside))


def _full_mask(grid: Grid) -> np.ndarray:
    return np.ones(grid.n_total, dtype=bool)


def apply_shifted(values: np.ndarray, grid: Grid, alpha: float, beta: float,
                  mask: np.ndarray | None = None) -> np.ndarray:
    """Raw-array application of alpha*I + beta*L (L = negative Laplacian)."""
    nx, ny, ihx2, ihy2 = grid._kernel_shape()
    out = np.empty(grid.n_total)
    m = _full_mask(grid) if mask is None else mask
    _kernels.apply_shifted_laplacian(values, out, nx, ny, ihx2, ihy2, alpha, beta, m)
    return out


def apply_laplacian(f: Field) -> Field:
    """Negative Laplacian of f: 3-point (1D) or 5-point (2D) stencil with
    zero Dirichlet data; positive definite sign convention."""
    return Field(f.grid, apply_shifted(f.values, f.grid, 0.0, 1.0))


def _l2(values: np.ndarray, cell_volume: float) -> float:
    with np.errstate(over="ignore"):  # inf for astronomically large states
        return math.sqrt(float(values @ values) * cell_volume)


def _h1_semi(values: np.ndarray, grid: Grid) -> float:
    """Forward-difference H1 seminorm including one-sided differences to
    the zero boundary; equals sqrt(<L f, f> * cellvol) identically."""
    shape = grid.n if grid.dim == 2 else (grid.n[0],)
    v = values.reshape(shape)
    total = 0.0
    with np.errstate(over="ignore"):  # inf for astronomically large states
        for axis in range(grid.dim):
            padded = np.concatenate(
                [np.zeros_like(v.take([0], axis=axis)), v,
                 np.zeros_like(v.take([0], axis=axis))], axis=axis)
            diff = np.diff(padded, axis=axis) / grid.h[axis]
            total += float(np.sum(diff * diff))
    return math.sqrt(total * grid.cell_volume)


def norm(f: Field, kind: str, mask: Mask | None = None) -> float:
    """Discrete norm of a grid function.

    kind: "l2" (cell-volume weighted), "h1_semi" (forward differences,
    one-sided to the zero boundary), "linf", or "linf_on" restricted to a
    mask (empty mask returns 0 with a warning).
    """
    if kind == "l2":
        return _l2(f.values, f.grid.cell_volume)
    if kind == "h1_semi":
        return _h1_semi(f.values, f.grid)
    if kind == "linf":
        return float(np.max(np.abs(f.values))) if f.values.size else 0.0
    if kind == "linf_on":
        if mask is None:
            raise ConfigurationError("linf_on needs a mask")
        if mask.grid != f.grid:
            raise ConfigurationError("mask lives on a different grid")
        if not mask.flags.any():
            warnings.warn("linf_on over an empty mask; returning 0")
            return 0.0
        return float(np.max(np.abs(f.values[mask.flags])))
    raise ConfigurationError(f"unknown norm kind {kind!r}")


def smallest_laplacian_eigenvalue(grid: Grid) -> float:
    """Closed-form smallest eigenvalue of the discrete negative Laplacian."""
    lam = 0.0
    for axis in range(grid.dim):
        h = grid.h[axis]
        lo, hi = grid.extents[axis]
        lam += 2.0 / h**2 * (1.0 - math.cos(math.pi * h / (hi - lo)))
    return lam
