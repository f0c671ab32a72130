"""Uniform grids on discs and the fields that live on them.

A :class:`GridSpec` is the square lattice of ``(n + 1)**2`` nodes covering the
bounding box of a disc; the disc itself is a boolean mask.  Fields store the
full lattice array with ``nan`` outside their mask, so stencils that reach
outside the domain poison themselves and drop out of the output mask.

Arrays are indexed ``[row, col] = [y, x]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

MIN_CELLS = 16
_EDGE = 1e-9  # relative slack for "node lies on the circle"


@dataclass(frozen=True)
class GridSpec:
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 2.0
    n: int = 512

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.n < MIN_CELLS:
            raise ValueError(f"grid too coarse: n={self.n} < {MIN_CELLS}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def h(self) -> float:
        return 2.0 * self.radius / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n + 1, self.n + 1)

    @cached_property
    def x(self) -> np.ndarray:
        return self.center[0] - self.radius + self.h * np.arange(self.n + 1)

    @cached_property
    def y(self) -> np.ndarray:
        return self.center[1] - self.radius + self.h * np.arange(self.n + 1)

    @cached_property
    def X(self) -> np.ndarray:
        return np.broadcast_to(self.x[None, :], self.shape)

    @cached_property
    def Y(self) -> np.ndarray:
        return np.broadcast_to(self.y[:, None], self.shape)

    @cached_property
    def Z(self) -> np.ndarray:
        return self.X + 1j * self.Y

    @cached_property
    def mask(self) -> np.ndarray:
        return self.disc_mask(self.center, self.radius)

    def disc_mask(self, center, r: float) -> np.ndarray:
        """Nodes of the lattice in the closed disc ``|z - center| <= r``."""
        c = complex(*center) if not isinstance(center, complex) else center
        return np.abs(self.Z - c) <= r * (1 + _EDGE) + 1e-14

    def index_of(self, point) -> tuple[int, int] | None:
        """Lattice index of ``point`` if it coincides with a node, else None."""
        px, py = _as_xy(point)
        fi = (px - self.x[0]) / self.h
        fj = (py - self.y[0]) / self.h
        i, j = round(fi), round(fj)
        if abs(fi - i) > 1e-7 or abs(fj - j) > 1e-7:
            return None
        if not (0 <= i <= self.n and 0 <= j <= self.n):
            return None
        return j, i

    def contains(self, point) -> bool:
        px, py = _as_xy(point)
        return np.hypot(px - self.center[0], py - self.center[1]) <= self.radius * (1 + _EDGE)


def _as_xy(point) -> tuple[float, float]:
    if isinstance(point, complex):
        return point.real, point.imag
    return float(point[0]), float(point[1])


def as_complex(point) -> complex:
    px, py = _as_xy(point)
    return complex(px, py)


@dataclass(frozen=True, eq=False)
class Field:
    """Values on the masked nodes of a grid (``nan`` elsewhere)."""

    grid: GridSpec
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        mask = self.grid.mask if self.mask is None else np.asarray(self.mask, dtype=bool)
        vals = np.array(self.values, dtype=self._dtype, copy=True)
        if vals.shape != self.grid.shape or mask.shape != self.grid.shape:
            raise ValueError(f"shape mismatch: values {vals.shape}, grid {self.grid.shape}")
        if not np.all(np.isfinite(vals[mask])):
            raise ValueError("field has non-finite values on its mask")
        vals[~mask] = np.nan
        vals.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "mask", mask)

    _dtype = float

    @classmethod
    def sample(cls, grid: GridSpec, func: Callable, mask=None):
        """Evaluate ``func(x, y)`` on the grid nodes."""
        m = grid.mask if mask is None else mask
        vals = np.zeros(grid.shape, dtype=cls._dtype)
        vals[m] = func(grid.X[m], grid.Y[m])
        return cls(grid, vals, m)

    @classmethod
    def constant(cls, grid: GridSpec, c, mask=None):
        return cls.sample(grid, lambda x, y: np.full_like(x, c, dtype=cls._dtype), mask)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def masked(self) -> np.ndarray:
        return self.values[self.mask]

    def restrict(self, center, r: float):
        """Same field with the mask cut down to the disc ``B_r(center)``."""
        return type(self)(self.grid, self.values, self.mask & self.grid.disc_mask(as_complex(center), r))

    def with_values(self, values, mask=None):
        m = self.mask if mask is None else mask
        out_type = ComplexField if np.iscomplexobj(values) else ScalarField
        return out_type(self.grid, np.where(m, values, 0), m)

    def filled(self, value=0.0) -> np.ndarray:
        return np.where(self.mask, self.values, value)

    def __call__(self, point):
        """Bilinear interpolation at an arbitrary point of the mask."""
        return interpolate(self, point)

    def to_csv(self, path) -> None:
        write_csv(self, path)


class ScalarField(Field):
    _dtype = float


class ComplexField(Field):
    _dtype = complex

    @property
    def real(self) -> ScalarField:
        return ScalarField(self.grid, self.values.real, self.mask)

    @property
    def imag(self) -> ScalarField:
        return ScalarField(self.grid, self.values.imag, self.mask)


def _check_resolution(f: Field) -> None:
    if f.grid.n < MIN_CELLS:
        raise ValueError(f"grid too coarse: n={f.grid.n} < {MIN_CELLS}")


def _shifted(a: np.ndarray, dj: int, di: int) -> np.ndarray:
    """a[j + dj, i + di] with nan padding."""
    out = np.full_like(a, np.nan)
    nj, ni = a.shape
    src_j = slice(max(dj, 0), nj + min(dj, 0))
    dst_j = slice(max(-dj, 0), nj + min(-dj, 0))
    src_i = slice(max(di, 0), ni + min(di, 0))
    dst_i = slice(max(-di, 0), ni + min(-di, 0))
    out[dst_j, dst_i] = a[src_j, src_i]
    return out


def interior_mask(mask: np.ndarray) -> np.ndarray:
    """Nodes of ``mask`` whose four lattice neighbours are also in ``mask``."""
    m = mask.copy()
    m[1:, :] &= mask[:-1, :]
    m[:-1, :] &= mask[1:, :]
    m[:, 1:] &= mask[:, :-1]
    m[:, :-1] &= mask[:, 1:]
    m[0, :] = m[-1, :] = False
    m[:, 0] = m[:, -1] = False
    return m


def _out(f: Field, values: np.ndarray, mask: np.ndarray):
    cls = ComplexField if np.iscomplexobj(values) else ScalarField
    return cls(f.grid, np.where(mask, values, 0), mask)


def laplacian(f: Field) -> Field:
    """Five-point Laplacian; the boundary ring of the mask is dropped."""
    _check_resolution(f)
    a = f.values
    lap = (_shifted(a, 0, 1) + _shifted(a, 0, -1) + _shifted(a, 1, 0) + _shifted(a, -1, 0) - 4 * a) / f.h**2
    return _out(f, lap, interior_mask(f.mask))


def partial_x(f: Field) -> Field:
    _check_resolution(f)
    d = (_shifted(f.values, 0, 1) - _shifted(f.values, 0, -1)) / (2 * f.h)
    return _out(f, d, interior_mask(f.mask))


def partial_y(f: Field) -> Field:
    _check_resolution(f)
    d = (_shifted(f.values, 1, 0) - _shifted(f.values, -1, 0)) / (2 * f.h)
    return _out(f, d, interior_mask(f.mask))


def gradient(f: Field) -> tuple[Field, Field]:
    return partial_x(f), partial_y(f)


def dbar(f: Field) -> ComplexField:
    """Centered-difference d-bar operator, (d_x + i d_y) / 2."""
    fx, fy = gradient(f)
    return _out(f, 0.5 * (fx.values + 1j * fy.values), fx.mask)


def dz(f: Field) -> ComplexField:
    """Centered-difference d operator, (d_x - i d_y) / 2."""
    fx, fy = gradient(f)
    return _out(f, 0.5 * (fx.values - 1j * fy.values), fx.mask)


def grad_norm(f: Field) -> ScalarField:
    fx, fy = gradient(f)
    return ScalarField(f.grid, np.where(fx.mask, np.hypot(fx.values, fy.values), 0), fx.mask)


def sup_norm(f: Field, center=(0.0, 0.0), r: float | None = None) -> float:
    """Max of ``|f|`` over the masked nodes in the closed disc ``B_r(center)``."""
    m = f.mask if r is None else f.mask & f.grid.disc_mask(as_complex(center), r)
    if not m.any():
        raise ValueError(f"disc B_{r}({center}) contains no nodes of the field")
    return float(np.max(np.abs(f.values[m])))


def inf_value(f: ScalarField, center=(0.0, 0.0), r: float | None = None) -> float:
    m = f.mask if r is None else f.mask & f.grid.disc_mask(as_complex(center), r)
    if not m.any():
        raise ValueError(f"disc B_{r}({center}) contains no nodes of the field")
    return float(np.min(f.values[m]))


def integrate(f: Field, center=None, r: float | None = None):
    """Cell-area quadrature: sum of values times ``h**2`` over the mask."""
    m = f.mask
    if r is not None:
        m = m & f.grid.disc_mask(as_complex(center if center is not None else f.grid.center), r)
    s = np.sum(f.values[m]) * f.h**2
    return complex(s) if np.iscomplexobj(f.values) else float(s)


def interpolate(f: Field, point):
    """Bilinear interpolation; all four surrounding nodes must be in the mask."""
    px, py = _as_xy(point)
    g = f.grid
    fi = (px - g.x[0]) / g.h
    fj = (py - g.y[0]) / g.h
    i0 = int(np.clip(np.floor(fi), 0, g.n - 1))
    j0 = int(np.clip(np.floor(fj), 0, g.n - 1))
    ti, tj = fi - i0, fj - j0
    if abs(ti) < 1e-9 and abs(tj) < 1e-9 and f.mask[j0, i0]:
        return f.values[j0, i0]
    block = f.values[j0:j0 + 2, i0:i0 + 2]
    if not np.all(f.mask[j0:j0 + 2, i0:i0 + 2]):
        raise ValueError(f"point {point} is outside the field's mask")
    return ((1 - tj) * ((1 - ti) * block[0, 0] + ti * block[0, 1])
            + tj * ((1 - ti) * block[1, 0] + ti * block[1, 1]))


def write_csv(f: Field, path) -> None:
    """Rows ``x,y,value`` (or ``x,y,re,im``), row-major over the mask, 17 digits."""
    m = f.mask
    x, y = f.grid.X[m], f.grid.Y[m]
    v = f.values[m]
    if np.iscomplexobj(v):
        header = "x,y,re,im"
        data = np.column_stack([x, y, v.real, v.imag])
    else:
        header = "x,y,value"
        data = np.column_stack([x, y, v])
    np.savetxt(Path(path), data, fmt="%.17g", delimiter=",", header=header, comments="")


def read_csv(path, grid: GridSpec | None = None) -> Field:
    """Inverse of :func:`write_csv`; the grid is inferred from the nodes if not given."""
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    x, y = data[:, 0], data[:, 1]
    if grid is None:
        xs = np.unique(x)
        h = float(np.min(np.diff(xs)))
        cx = 0.5 * (x.min() + x.max())
        cy = 0.5 * (y.min() + y.max())
        radius = 0.5 * max(x.max() - x.min(), y.max() - y.min())
        grid = GridSpec((cx, cy), radius, int(round(2 * radius / h)))
    i = np.rint((x - grid.x[0]) / grid.h).astype(int)
    j = np.rint((y - grid.y[0]) / grid.h).astype(int)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[j, i] = True
    if header[2:] == ["re", "im"]:
        vals = np.zeros(grid.shape, dtype=complex)
        vals[j, i] = data[:, 2] + 1j * data[:, 3]
        return ComplexField(grid, vals, mask)
    vals = np.zeros(grid.shape)
    vals[j, i] = data[:, 2]
    return ScalarField(grid, vals, mask)
