"""Cauchy transform on grid cells, the anchored variant, and similarity factorization.

The transform ``w(z) = -(1/pi) int f(zeta) / (zeta - z) dA`` is discretized with
``f`` piecewise constant on the square cells centred at the nodes.  With the
``exact-cell`` rule each cell integral of the kernel is evaluated in closed
form, so the discrete ``w`` is the exact transform of the piecewise-constant
data.  On a uniform lattice the sum is a discrete convolution; ``method="fft"``
evaluates it with ``scipy.signal.fftconvolve`` and ``method="direct"`` sums it
term by term (O(N^2), only for small grids and cross-checks).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.signal import fftconvolve

from .grid import ComplexField, Field, GridSpec, as_complex, dbar, dz, interior_mask, sup_norm

OVERFLOW_LIMIT = 700.0


def _xatan(x, y):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x == 0, 0.0, x * np.arctan(y / np.where(x == 0, 1.0, x)))


def _ylog(x, y):
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(y == 0, 0.0, 0.5 * y * np.log(np.where(r2 == 0, 1.0, r2)))


def _prim(x, y):
    """Antiderivative in both variables of ``x / (x^2 + y^2)``."""
    return _ylog(x, y) - y + _xatan(x, y)


def cell_integral(dx, dy, h: float):
    """``int dA / xi`` over the square of side ``h`` centred at ``dx + i dy``."""
    x0, x1 = dx - h / 2, dx + h / 2
    y0, y1 = dy - h / 2, dy + h / 2

    def box(F, a0, a1, b0, b1):
        return F(a1, b1) - F(a0, b1) - F(a1, b0) + F(a0, b0)

    re = box(_prim, x0, x1, y0, y1)
    im = -box(lambda a, b: _prim(b, a), x0, x1, y0, y1)
    return re + 1j * im


@dataclass(frozen=True)
class CauchyQuadrature:
    """Kernel table ``(1/pi) int_cell dA / xi`` for every lattice offset."""

    domain: GridSpec
    singular_cell_rule: str = "exact-cell"

    def __post_init__(self):
        if self.singular_cell_rule not in ("exact-cell", "polar-corrected"):
            raise ValueError(f"unknown singular cell rule {self.singular_cell_rule!r}")

    @cached_property
    def kernel(self) -> np.ndarray:
        n, h = self.domain.n, self.domain.h
        off = h * np.arange(-n, n + 1)
        DX, DY = np.meshgrid(off, off)
        if self.singular_cell_rule == "exact-cell":
            return cell_integral(DX, DY, h) / np.pi
        with np.errstate(divide="ignore", invalid="ignore"):
            k = h**2 / (np.pi * (DX + 1j * DY))
        # the centred square is symmetric, so the singular cell integrates to 0
        k[n, n] = 0.0
        return k

    def point_weights(self, z: complex, mask: np.ndarray) -> np.ndarray:
        """Kernel weights ``(1/pi) int_cell dA / (zeta - z)`` for an arbitrary target."""
        g = self.domain
        d = g.Z[mask] - z
        if self.singular_cell_rule == "exact-cell":
            return cell_integral(d.real, d.imag, g.h) / np.pi
        with np.errstate(divide="ignore", invalid="ignore"):
            k = g.h**2 / (np.pi * d)
        k[np.abs(d) < 1e-12] = 0.0
        return k


def _quadrature(f: Field, q: CauchyQuadrature | None) -> CauchyQuadrature:
    if q is None:
        return CauchyQuadrature(f.grid)
    if q.domain != f.grid:
        raise ValueError("quadrature built for a different grid")
    return q


def cauchy_transform(f: Field, q: CauchyQuadrature | None = None, method: str = "fft") -> ComplexField:
    """``w = -(1/pi) int f(zeta) / (zeta - z) dA`` at the nodes of ``f``'s mask.

    ``dbar w = f`` inside the support and ``|w| <= 4 radius |f|_inf``.
    """
    q = _quadrature(f, q)
    src = f.filled(0.0).astype(complex)
    n = f.grid.n
    if method == "fft":
        full = fftconvolve(src, q.kernel)
        w = full[n:2 * n + 1, n:2 * n + 1]
    elif method == "direct":
        w = np.zeros(f.grid.shape, dtype=complex)
        J, I = np.nonzero(f.mask)
        sj, si = np.nonzero(src != 0)
        vals = src[sj, si]
        for start in range(0, J.size, 512):
            tj, ti = J[start:start + 512], I[start:start + 512]
            k = q.kernel[tj[:, None] - sj[None, :] + n, ti[:, None] - si[None, :] + n]
            w[tj, ti] = k @ vals
    else:
        raise ValueError(f"unknown method {method!r}")
    return ComplexField(f.grid, np.where(f.mask, w, 0), f.mask)


def cauchy_at(f: Field, z, q: CauchyQuadrature | None = None) -> complex:
    """The transform evaluated at one arbitrary point."""
    q = _quadrature(f, q)
    zc = as_complex(z)
    k = q.point_weights(zc, f.mask)
    # w(z) = -sum f_j (1/pi) int_cell dA / (zeta - z)
    return complex(-np.sum(k * f.values[f.mask]))


def anchored_cauchy_transform(f: Field, zhat, q: CauchyQuadrature | None = None,
                              method: str = "fft") -> ComplexField:
    """``w(z) = (1/pi) int f/(xi - z) - (1/pi) int f/(xi - zhat)``: ``dbar w = -f``, ``w(zhat) = 0``."""
    q = _quadrature(f, q)
    zc = as_complex(zhat)
    w = cauchy_transform(f, q, method)
    idx = f.grid.index_of(zc)
    if idx is not None and f.mask[idx]:
        at_anchor = w.values[idx]
    else:
        at_anchor = cauchy_at(f, zc, q)
    vals = at_anchor - w.values
    if idx is not None and f.mask[idx]:
        vals[idx] = 0.0
    return ComplexField(f.grid, np.where(f.mask, vals, 0), f.mask)


def anchored_envelope(grid: GridSpec, zhat, targets: np.ndarray, mask: np.ndarray | None = None,
                      q: CauchyQuadrature | None = None) -> np.ndarray:
    """``sup_{|f| <= 1} |w(z)|`` of the anchored transform for each target ``z``.

    The supremum is ``(1/pi) int |1/(xi - z) - 1/(xi - zhat)| dA``; it is
    evaluated cell by cell with the exact cell integrals of the two kernels.
    """
    q = CauchyQuadrature(grid) if q is None else q
    m = grid.mask if mask is None else mask
    zc = as_complex(zhat)
    base = q.point_weights(zc, m)
    return np.array([np.sum(np.abs(q.point_weights(complex(t), m) - base)) for t in np.ravel(targets)])


def fit_log_envelope(w: ComplexField, zhat, norm: float, c_log: float = 10.0,
                     min_dist: float | None = None) -> float:
    """Smallest ``C`` with ``|w(z)| <= C |f| d log(c_log / d)``, ``d = |z - zhat|``."""
    zc = as_complex(zhat)
    d = np.abs(w.grid.Z - zc)
    floor = w.grid.h if min_dist is None else min_dist
    sel = w.mask & (d >= floor)
    dd = d[sel]
    env = norm * dd * np.log(c_log / dd)
    if np.any(env <= 0):
        raise ValueError("c_log too small for the domain")
    return float(np.max(np.abs(w.values[sel]) / env))


def dbar_residual(w: ComplexField, f: Field, r_inner: float | None = None, center=None) -> float:
    """``sup |dbar w - f|`` over the nodes of ``B_{r_inner}`` where both are defined."""
    d = dbar(w)
    m = d.mask & f.mask
    if r_inner is not None:
        c = w.grid.center if center is None else center
        m &= w.grid.disc_mask(as_complex(c), r_inner)
    if not m.any():
        raise ValueError("no nodes to measure the residual on")
    return float(np.max(np.abs(d.values[m] - f.values[m])))


@dataclass(frozen=True, eq=False)
class Factorization:
    w: ComplexField
    h: ComplexField
    residual: float  # sup |dbar h| on the inner disc


def similarity_factorize(g: ComplexField, coeff: Field, q: CauchyQuadrature | None = None,
                         r_inner: float | None = None) -> Factorization:
    """``g = exp(w) h`` with ``w`` the Cauchy transform of ``coeff``."""
    if g.grid != coeff.grid:
        raise ValueError("g and coeff must share a grid")
    w = cauchy_transform(coeff, q)
    wmax = np.max(np.abs(w.values[w.mask])) if w.count else 0.0
    if wmax > OVERFLOW_LIMIT:
        raise OverflowError(f"|w| = {wmax:.4g} would overflow exp(-w)")
    m = w.mask & g.mask
    hv = np.where(m, np.exp(-np.where(m, w.values, 0)) * np.where(m, g.values, 0), 0)
    h = ComplexField(g.grid, hv, m)
    inner = interior_mask(m)
    if r_inner is not None:
        inner &= g.grid.disc_mask(as_complex(g.grid.center), r_inner)
    dh = dbar(h)
    sel = inner & dh.mask
    res = float(np.max(np.abs(dh.values[sel]))) if sel.any() else 0.0
    return Factorization(w, h, res)


def holomorphy_ratio(h: ComplexField, center=(0.0, 0.0), r: float | None = None) -> float:
    """``sup |dbar h| / max(sup |d h|, sup |h| / r)`` over a disc: near 0 for holomorphic ``h``.

    The ``sup |h| / r`` floor keeps constants (``d h = 0``) from reading as non-holomorphic.
    """
    db, d = dbar(h), dz(h)
    m = db.mask
    rho = h.grid.radius if r is None else r
    if r is not None:
        m = m & h.grid.disc_mask(as_complex(center), r)
    num = np.max(np.abs(db.values[m]))
    den = max(np.max(np.abs(d.values[m])), np.max(np.abs(h.values[m])) / rho)
    if den == 0:
        return 0.0 if num == 0 else np.inf
    return float(num / den)


def kernel_bound(radius: float) -> float:
    """``(1/pi) int_{B_{2 radius}} |zeta|^-1 dA = 4 radius`` bounds ``|w| / |f|``."""
    return 4.0 * radius


def transform_bound(f: Field) -> float:
    return kernel_bound(f.grid.radius) * sup_norm(f)
