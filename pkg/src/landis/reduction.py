"""Reduction of the real equation to a d-bar equation.

``u = phi v`` puts the equation in divergence form; the stream function ``vt``
of ``v`` makes ``g = phi^2 v + i vt`` solve ``dbar g = gamma (g + conj g)``,
which is rewritten as ``dbar g = gamma_t g``.  For the drift-gradient equation
``G = d v`` solves ``dbar G = W_t G`` directly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import CutoffGeometry
from .grid import (
    ComplexField,
    Field,
    ScalarField,
    as_complex,
    dbar,
    dz,
    grad_norm,
    gradient,
    inf_value,
    interior_mask,
    partial_x,
    partial_y,
    sup_norm,
)
from .multiplier import Multiplier

log = logging.getLogger(__name__)

PHI_FLOOR = 1e-300
G_FLOOR = 1e-12  # relative floor below which the reduced coefficient is set to 0


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    v: ScalarField
    vtilde: ScalarField
    g: ComplexField
    coeff: ComplexField
    chi: ScalarField | None = None
    anchor_a: float | None = None
    residual: float = float("nan")  # sup |dbar g - coeff g - sources| on the check disc


def _drift(W, like: Field):
    if W is None:
        z = np.zeros(like.grid.shape)
        return z, z
    return W[0].filled(0.0), W[1].filled(0.0)


def to_divergence_form(u: ScalarField, m: Multiplier) -> ScalarField:
    """``v = u / phi``."""
    if u.grid != m.grid:
        raise ValueError("u and the multiplier must share a grid")
    mask = u.mask & m.phi.mask
    if np.min(m.phi.values[mask]) < PHI_FLOOR:
        raise ValueError("multiplier below its positivity floor")
    return ScalarField(u.grid, np.where(mask, u.values / np.where(mask, m.phi.values, 1), 0), mask)


def _flux(v: ScalarField, m: Multiplier, W=None):
    """``phi^2 (grad v - W v)`` as two arrays with its mask."""
    vx, vy = gradient(v)
    W1, W2 = _drift(W, v)
    phi2 = m.phi.filled(0.0) ** 2
    mask = vx.mask
    fx = np.where(mask, phi2 * (vx.filled(0) - W1 * v.filled(0)), np.nan)
    fy = np.where(mask, phi2 * (vy.filled(0) - W2 * v.filled(0)), np.nan)
    return fx, fy, mask


def divergence_residual(v: ScalarField, m: Multiplier, W=None, r: float | None = None) -> float:
    """Sup of ``div(phi^2 (grad v - W v))`` on ``B_r`` (discrete, centred)."""
    fx, fy, mask = _flux(v, m, W)
    dfx = partial_x(ScalarField(v.grid, np.where(mask, fx, 0), mask))
    dfy = partial_y(ScalarField(v.grid, np.where(mask, fy, 0), mask))
    div = ScalarField(v.grid, dfx.filled(0) + dfy.filled(0), dfx.mask)
    return sup_norm(div, v.grid.center, r)


def _cumtrapz_from(a: np.ndarray, k: int, h: float) -> np.ndarray:
    """Trapezoid integral of ``a`` from index ``k`` to every index (nan propagates)."""
    out = np.full(a.shape, np.nan)
    out[k] = 0.0
    fwd = a[k:]
    out[k + 1:] = np.cumsum(0.5 * (fwd[1:] + fwd[:-1])) * h
    bwd = a[:k + 1][::-1]
    out[:k][::-1] = -np.cumsum(0.5 * (bwd[1:] + bwd[:-1])) * h
    return out


def _path_integral(dx_field: np.ndarray, dy_field: np.ndarray, base: tuple[int, int], h: float,
                   vertical_first: bool) -> np.ndarray:
    """Integrate a gradient field along axis-aligned two-segment paths from ``base``.

    ``vertical_first=False``: along the base row, then up each column.
    ``vertical_first=True``: along the base column, then across each row.
    """
    j0, i0 = base
    out = np.full(dx_field.shape, np.nan)
    if vertical_first:
        col = _cumtrapz_from(dy_field[:, i0], j0, h)
        for j in range(dx_field.shape[0]):
            if np.isfinite(col[j]):
                out[j] = col[j] + _cumtrapz_from(dx_field[j], i0, h)
    else:
        row = _cumtrapz_from(dx_field[j0], i0, h)
        for i in range(dx_field.shape[1]):
            if np.isfinite(row[i]):
                out[:, i] = row[i] + _cumtrapz_from(dy_field[:, i], j0, h)
    return out


def stream_function(v: ScalarField, m: Multiplier, W=None, base=(0.0, 0.0)) -> ScalarField:
    """``vt`` with ``d_y vt = phi^2 (d_x v - W1 v)``, ``-d_x vt = phi^2 (d_y v - W2 v)``, ``vt(base) = 0``.

    Trapezoid rule along the base row, then along each column.
    """
    fx, fy, mask = _flux(v, m, W)
    idx = v.grid.index_of(base)
    if idx is None or not mask[idx]:
        raise ValueError(f"base point {base} is not an interior node")
    vt = _path_integral(-fy, fx, idx, v.grid.h, vertical_first=False)
    ok = mask & np.isfinite(vt)
    return ScalarField(v.grid, np.where(ok, vt, 0), ok)


def loop_defects(vt_grad: tuple[np.ndarray, np.ndarray], mask: np.ndarray, h: float,
                 rng: np.random.Generator, count: int = 20, min_side: int = 4) -> np.ndarray:
    """``|closed trapezoid integral| / perimeter`` over random lattice rectangles inside ``mask``."""
    p, q = vt_grad  # d_x vt, d_y vt
    J, I = np.nonzero(mask)
    out = []
    tries = 0
    while len(out) < count and tries < 100 * count:
        tries += 1
        k = rng.integers(J.size)
        j0, i0 = J[k], I[k]
        nj, ni = rng.integers(min_side, 4 * min_side + 1, size=2)
        j1, i1 = j0 + nj, i0 + ni
        if j1 >= mask.shape[0] or i1 >= mask.shape[1] or not mask[j0:j1 + 1, i0:i1 + 1].all():
            continue

        def seg(a):
            return 0.5 * np.sum(a[1:] + a[:-1]) * h

        circ = (seg(p[j0, i0:i1 + 1]) + seg(q[j0:j1 + 1, i1])
                - seg(p[j1, i0:i1 + 1]) - seg(q[j0:j1 + 1, i0]))
        out.append(abs(circ) / (2 * (nj + ni) * h))
    return np.array(out)


def stream_loop_defects(v: ScalarField, m: Multiplier, W=None, seed: int = 0, count: int = 20) -> np.ndarray:
    """Loop defects of the stream-function gradient field; small iff ``v`` is divergence-form consistent."""
    fx, fy, mask = _flux(v, m, W)
    return loop_defects((-fy, fx), mask, v.grid.h, np.random.default_rng(seed), count)


def _snap_column(grid, a: float) -> int:
    fi = (a - grid.x[0]) / grid.h
    i = int(np.ceil(fi - 1e-9))
    if not 0 <= i <= grid.n:
        raise ValueError(f"abscissa a = {a} outside the grid")
    return i


def approximate_stream_function(v: ScalarField, m: Multiplier, geom: CutoffGeometry) -> tuple[ScalarField, float]:
    """Cut-off stream function based at ``(a, 0)``.

    ``vt(x, y) = int_a^x -[chi phi^2 d_y v](s, y) ds + int_0^y [chi phi^2 d_x v](a, s) ds``,
    integrated along the column ``x = a`` first.  When ``a`` is not a lattice
    column the next column to the right is used; it is returned alongside.
    """
    g = v.grid
    if abs(geom.z1) + geom.hole_radius > 7 / 5:
        raise ValueError("geometry invalid: hole not inside B_7/5")
    vx, vy = gradient(v)
    mask = vx.mask
    chi = geom.chi(g.Z)
    phi2 = m.phi.filled(0.0) ** 2
    fx = np.where(mask, chi * phi2 * vx.filled(0), np.nan)   # d_y vt along x = a
    fy = np.where(mask, -chi * phi2 * vy.filled(0), np.nan)  # d_x vt
    i0 = _snap_column(g, geom.a)
    j0 = g.index_of((g.x[i0], 0.0))
    if j0 is None or not mask[j0]:
        raise ValueError("path base (a, 0) is not an interior node")
    vt = _path_integral(fy, fx, j0, g.h, vertical_first=True)
    ok = mask & np.isfinite(vt)
    return ScalarField(g, np.where(ok, vt, 0), ok), float(g.x[i0])


def correction_integral(v: ScalarField, m: Multiplier, geom: CutoffGeometry, a: float | None = None) -> ScalarField:
    """``int_a^x -[d_y chi phi^2 d_y v + d_x chi phi^2 d_x v](s, y) ds``: the defect of ``d_y vt``."""
    g = v.grid
    vx, vy = gradient(v)
    mask = vx.mask
    cx, cy = geom.chi_gradient(g.Z)
    phi2 = m.phi.filled(0.0) ** 2
    integrand = np.where(mask, -(cy * phi2 * vy.filled(0) + cx * phi2 * vx.filled(0)), np.nan)
    i0 = _snap_column(g, geom.a if a is None else a)
    out = np.full(g.shape, np.nan)
    for j in range(g.shape[0]):
        out[j] = _cumtrapz_from(integrand[j], i0, g.h)
    ok = mask & np.isfinite(out)
    return ScalarField(g, np.where(ok, out, 0), ok)


def stream_identities(v: ScalarField, m: Multiplier, geom: CutoffGeometry, vt: ScalarField, a: float) -> dict:
    """Residuals of the two derivative identities of the cut-off stream function."""
    g = v.grid
    vx, vy = gradient(v)
    tx, ty = gradient(vt)
    chi = geom.chi(g.Z)
    phi2 = m.phi.filled(0.0) ** 2
    corr = correction_integral(v, m, geom, a)
    sel = tx.mask & vx.mask & corr.mask
    rx = np.abs(tx.values + chi * phi2 * vy.values)[sel]
    ry = np.abs(ty.values - chi * phi2 * vx.values - corr.values)[sel]
    scale = np.max(np.abs(phi2 * np.hypot(vx.filled(0), vy.filled(0)))[sel])
    support = np.abs(corr.values) > 1e-10 * max(scale, 1e-300) * g.h
    strip = geom.h2_strip(g.Z) | geom.regions(g.Z)["G"]
    # allow one lattice cell of slack at the strip edges
    near = np.abs(np.abs(g.Z - geom.z1) - geom.chi_outer) <= 2 * g.h
    near |= (np.abs(g.X - a) <= 2 * g.h) | (np.abs(np.abs(g.Y) - geom.chi_outer) <= 2 * g.h)
    outside = support & corr.mask & ~strip & ~near
    return {
        "dx_residual": float(rx.max()),
        "dy_residual": float(ry.max()),
        "scale": float(scale),
        "correction_outside_strip": int(outside.sum()),
        "correction_max": float(np.max(np.abs(corr.values[corr.mask]))),
    }


def assemble_g(v: ScalarField, vtilde: ScalarField, m: Multiplier, chi: ScalarField | None = None) -> ComplexField:
    """``g = chi phi^2 v + i vt``."""
    mask = v.mask & vtilde.mask
    c = 1.0 if chi is None else chi.filled(0.0)
    vals = c * m.phi.filled(0.0) ** 2 * v.filled(0.0) + 1j * vtilde.filled(0.0)
    return ComplexField(v.grid, np.where(mask, vals, 0), mask)


def gamma(m: Multiplier, W=None) -> ComplexField:
    """``dbar log phi + (W1 + i W2) / 2``."""
    gx, gy = gradient(m.psi)
    W1, W2 = _drift(W, m.psi)
    vals = 0.5 * (gx.filled(0) + 1j * gy.filled(0)) + 0.5 * (W1 + 1j * W2)
    return ComplexField(gx.grid, np.where(gx.mask, vals, 0), gx.mask)


def reduce_coefficient(c: ComplexField, g: ComplexField) -> ComplexField:
    """``c + c conj(g)/g`` where ``|g| >= 1e-12 |g|_inf``, else 0."""
    mask = c.mask & g.mask
    gv = np.where(mask, g.values, 0)
    floor = G_FLOOR * np.max(np.abs(gv))
    live = mask & (np.abs(gv) >= floor) & (np.abs(gv) > 0)
    safe = np.where(live, gv, 1.0)
    vals = np.where(live, c.filled(0) * (1 + np.conj(safe) / safe), 0)
    return ComplexField(g.grid, vals, mask)


def coefficients(m: Multiplier, W, g: ComplexField) -> tuple[ComplexField, ComplexField]:
    """``(gamma, gamma_t)``; ``gamma = alpha`` when there is no drift."""
    c = gamma(m, W)
    return c, reduce_coefficient(c, g)


def reduce_divergence_form(u: ScalarField, m: Multiplier, W=None, check_radius: float = 1.3) -> ReducedSystem:
    """The whole-disc reduction: ``v``, stream function, ``g`` and ``gamma_t``."""
    v = to_divergence_form(u, m)
    vt = stream_function(v, m, W)
    g = assemble_g(v, vt, m)
    c, ct = coefficients(m, W, g)
    dg = dbar(g)
    sel = dg.mask & ct.mask & g.grid.disc_mask(0j, check_radius)
    res = float(np.max(np.abs(dg.values - ct.values * g.values)[sel])) if sel.any() else float("nan")
    return ReducedSystem(v, vt, g, ct, residual=res)


def reduce_exterior(u: ScalarField, m: Multiplier, geom: CutoffGeometry) -> tuple[ReducedSystem, dict]:
    """Cut-off reduction: ``dbar g = alpha_t g + dbar(chi) phi u + (1/2) correction``."""
    v = to_divergence_form(u, m)
    vt, a = approximate_stream_function(v, m, geom)
    chi = geom.chi_field(u.grid)
    g = assemble_g(v, vt, m, chi)
    c, ct = coefficients(m, None, g)
    corr = correction_integral(v, m, geom, a)
    z = u.grid.Z
    sources = geom.dbar_chi(z) * m.phi.filled(0) * u.filled(0) - 0.5 * corr.filled(0)
    dg = dbar(g)
    sel = dg.mask & ct.mask & corr.mask
    res = float(np.max(np.abs(dg.values - ct.values * g.values - sources)[sel]))
    diag = stream_identities(v, m, geom, vt, a)
    return ReducedSystem(v, vt, g, ct, chi, a, res), diag


def drift_reduction(v: ScalarField, m: Multiplier, W=None,
                    check_radius: float = 7 / 5) -> tuple[ComplexField, ComplexField, float]:
    """``G = d v`` and ``W_t`` with ``dbar G = W_t G``; returns ``(G, W_t, residual)``.

    From ``lap v + b . grad v = 0``, ``b = 2 grad psi + W``: ``dbar G = -Re(beta G) / 2``
    with ``beta = b1 + i b2``, i.e. ``W_t = -(beta + conj(beta) conj(G)/G) / 4``.
    """
    G = dz(v)
    px, py = gradient(m.psi)
    W1, W2 = _drift(W, v)
    beta = 2 * (px.filled(0) + 1j * py.filled(0)) + (W1 + 1j * W2)
    mask = G.mask & px.mask
    gv = np.where(mask, G.values, 0)
    floor = G_FLOOR * np.max(np.abs(gv))
    live = mask & (np.abs(gv) >= floor) & (np.abs(gv) > 0)
    if live.sum() < 0.5 * mask.sum():
        log.warning("d v vanishes on %.0f%% of the nodes", 100 * (1 - live.sum() / mask.sum()))
    safe = np.where(live, gv, 1.0)
    wt = np.where(live, -0.25 * (beta + np.conj(beta) * np.conj(safe) / safe), 0)
    Wt = ComplexField(v.grid, wt, mask)
    dG = dbar(G)
    sel = dG.mask & mask & v.grid.disc_mask(0j, check_radius)
    res = float(np.max(np.abs(dG.values - wt * gv)[sel])) if sel.any() else float("nan")
    return G, Wt, res


@dataclass(frozen=True)
class CaseAnalysis:
    branch: str  # "gradient" or "positive"
    a: float
    gradient_bound: float
    measured_gradient: float
    sign: int  # +1, or -1 when u was flipped so that max u >= 1


def dichotomy_threshold(M: float, K: float) -> float:
    """``a = exp(-4 (sqrt M + K)) / 2``."""
    return 0.5 * np.exp(-4 * (np.sqrt(M) + K))


def gradient_lower_bound(M: float, K: float) -> float:
    """``exp(-2 (sqrt M + K)) / 2``."""
    return 0.5 * np.exp(-2 * (np.sqrt(M) + K))


def gradient_case_analysis(u: ScalarField, m: Multiplier) -> CaseAnalysis:
    """Either ``u >= a`` on ``B_6/5`` or ``|grad v|`` on ``B_6/5`` is at least ``exp(-2 lam)/2``."""
    if sup_norm(u, (0, 0), 1.0) < 1:
        raise ValueError("hypothesis |u|_{B_1} >= 1 violated")
    sign = 1
    b1 = u.restrict((0, 0), 1.0)
    if np.max(b1.masked()) < 1:
        sign = -1
        u = ScalarField(u.grid, -u.values, u.mask)
    a = dichotomy_threshold(m.M, m.K)
    bound = gradient_lower_bound(m.M, m.K)
    v = to_divergence_form(u, m)
    measured = sup_norm(grad_norm(v), (0, 0), 6 / 5)
    branch = "gradient" if inf_value(u, (0, 0), 6 / 5) < a else "positive"
    return CaseAnalysis(branch, float(a), float(bound), measured, sign)


def vtilde_smallness(vt: ScalarField, v: ScalarField, m: Multiplier, radii, W=None) -> np.ndarray:
    """``sup_{B_r} |vt| / (r sup_{B_r} phi^2 |grad v - W v|)``: at most sqrt(2) for L-paths from 0."""
    fx, fy, mask = _flux(v, m, W)
    flux = ScalarField(v.grid, np.where(mask, np.hypot(fx, fy), 0), mask)
    return np.array([sup_norm(vt, (0, 0), r) / (r * sup_norm(flux, (0, 0), r)) for r in radii])


def modulus_sandwich(g: ComplexField, u: ScalarField, m: Multiplier, vt: ScalarField) -> float:
    """Largest violation of ``phi |u| <= |g| <= phi |u| + |vt|`` (0 when it holds)."""
    mask = g.mask & u.mask & vt.mask
    ag = np.abs(g.values[mask])
    pu = np.abs(m.phi.values[mask] * u.values[mask])
    lo = np.maximum(pu - ag, 0)
    hi = np.maximum(ag - pu - np.abs(vt.values[mask]), 0)
    scale = max(np.max(ag), 1e-300)
    return float(max(lo.max(), hi.max()) / scale)


def point_value(f: Field, z) -> complex:
    from .grid import interpolate
    return interpolate(f, as_complex(z))
