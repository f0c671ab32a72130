"""Three-circle certificates and the vanishing-order pipeline.

A certificate records an inequality of the form

    |u|_{B_r1} <= P |u|_{B_inner}^theta |u|_{B_r2}^(1 - theta)

and turns it into the exponent ``E`` with ``|u|_{B_r} >= r^E``:

    E = [log |u|_{r1} - log P - (1 - theta) log |u|_{r2}] / (theta log r).

The "halved" variant uses the inner radius ``r/2`` and
``theta = log(r2/r1) / log(2 r2 / r)``; the "standard" variant uses ``r`` and
``theta = log(r2/r1) / log(r2/r)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from . import dbar as dbar_mod
from .grid import ComplexField, Field, ScalarField, as_complex, grad_norm, sup_norm
from .multiplier import Multiplier, PotentialPair, build_multiplier
from .reduction import (
    coefficients,
    drift_reduction,
    gradient_case_analysis,
    reduce_divergence_form,
    to_divergence_form,
)

log = logging.getLogger(__name__)

R1, R2, WORKING = 1.0, 6 / 5, 7 / 5
GRADIENT_RADII = (6 / 5, 7 / 5)
HOLOMORPHY_TOL = 0.1
INTERIOR_GRADIENT_CONSTANT = 4.0


def theta(r: float, r1: float, r2: float, variant: str = "halved") -> float:
    if variant == "halved":
        if not (r / 2 < r1 < r2):
            raise ValueError(f"need r/2 < r1 < r2, got r={r}, r1={r1}, r2={r2}")
        return float(np.log(r2 / r1) / np.log(2 * r2 / r))
    if variant == "standard":
        if not (r < r1 < r2):
            raise ValueError(f"need r < r1 < r2, got r={r}, r1={r1}, r2={r2}")
        return float(np.log(r2 / r1) / np.log(r2 / r))
    raise ValueError(f"unknown variant {variant!r}")


def inner_radius(r: float, variant: str) -> float:
    return r / 2 if variant == "halved" else r


@dataclass(frozen=True)
class ThreeCircleCertificate:
    r: float
    r1: float
    r2: float
    theta: float
    sup_inner: float
    sup_mid: float
    sup_outer: float
    log_premultiplier: float = 0.0
    variant: str = "halved"

    @property
    def premultiplier(self) -> float:
        return float(np.exp(self.log_premultiplier))

    @property
    def slack(self) -> float:
        """``log sup_mid - log P - theta log sup_inner - (1 - theta) log sup_outer``: <= 0 when it holds."""
        return float(np.log(self.sup_mid) - self.log_premultiplier - self.theta * np.log(self.sup_inner)
                     - (1 - self.theta) * np.log(self.sup_outer))

    @property
    def order_bound(self) -> float:
        num = np.log(self.sup_mid) - self.log_premultiplier - (1 - self.theta) * np.log(self.sup_outer)
        return float(num / (self.theta * np.log(self.r)))

    @property
    def log_lower_bound(self) -> float:
        """Certified lower bound on ``log |u|_{B_r}``, i.e. ``E log r``."""
        num = np.log(self.sup_mid) - self.log_premultiplier - (1 - self.theta) * np.log(self.sup_outer)
        return float(num / self.theta)


def circle_sup(func: Callable, center: complex, rho: float, samples: int = 4096) -> float:
    """Max of ``|func|`` on the circle ``|z - center| = rho``, refined around the best sample."""
    t = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    vals = np.abs(func(center + rho * np.exp(1j * t)))
    k = int(np.argmax(vals))
    dt = 2 * np.pi / samples
    res = minimize_scalar(lambda s: -abs(func(center + rho * np.exp(1j * s))),
                          bounds=(t[k] - dt, t[k] + dt), method="bounded",
                          options={"xatol": 1e-13})
    return float(max(vals[k], -res.fun))


def hadamard_check(h, r: float, r1: float, r2: float, variant: str = "standard",
                   center=(0.0, 0.0), holomorphy_tol: float = HOLOMORPHY_TOL) -> ThreeCircleCertificate:
    """Sup-norms of ``h`` on the three discs.

    ``h`` is either a ComplexField (grid sup-norms, holomorphy checked through
    the d-bar residual) or a callable holomorphic function, whose disc sup-norms
    are circle maxima by the maximum principle.
    """
    th = theta(r, r1, r2, variant)
    ri = inner_radius(r, variant)
    c = as_complex(center)
    if callable(h) and not isinstance(h, Field):
        sups = [circle_sup(h, c, rho) for rho in (ri, r1, r2)]
    else:
        ratio = dbar_mod.holomorphy_ratio(h, c, r2)
        if ratio > holomorphy_tol:
            raise ValueError(f"input is not holomorphic on B_{r2}: dbar/d ratio {ratio:.3g}")
        sups = [sup_norm(h, c, rho) for rho in (ri, r1, r2)]
    return ThreeCircleCertificate(r, r1, r2, th, sups[0], sups[1], sups[2], 0.0, variant)


@dataclass(frozen=True, eq=False)
class OrderEstimate:
    exponent: float
    certificate: ThreeCircleCertificate
    lam: float
    valid: bool
    equation: str
    residuals: dict = field(default_factory=dict)
    branch: str = "three-circle"
    measured_sup: float | None = None

    @property
    def constant(self) -> float:
        """``E / (sqrt M + K)``."""
        return self.exponent / self.lam


def _check_hypotheses(u: ScalarField, lam: float, C0: float) -> None:
    if sup_norm(u, (0, 0), 1.0) < 1 - 1e-12:
        raise ValueError("hypothesis |u|_{B_1} >= 1 violated")
    if sup_norm(u, (0, 0), 2.0) > np.exp(C0 * lam) * (1 + 1e-9):
        raise ValueError(f"hypothesis |u|_{{B_2}} <= exp(C0 lam) violated for C0={C0}")


def _osc_re(w: ComplexField, rho: float) -> float:
    sel = w.mask & w.grid.disc_mask(0j, rho)
    re = w.values.real[sel]
    return float(re.max() - re.min())


def vanishing_order_bound(u: ScalarField, P: PotentialPair, C0: float, r: float,
                          equation: str = "divergence", m: Multiplier | None = None,
                          c_interior: float = INTERIOR_GRADIENT_CONSTANT,
                          holomorphy_tol: float = HOLOMORPHY_TOL) -> OrderEstimate:
    """Certified ``E`` with ``|u|_{B_r} >= r^E``.

    ``equation="divergence"``: ``lap u - div(W u) - V u = 0`` through the stream
    function.  ``equation="gradient"``: ``lap u + W . grad u - V u = 0`` through
    ``G = d v`` and the dichotomy on ``min u``.
    """
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    lam = P.lam
    _check_hypotheses(u, lam, C0)
    if m is None:
        m = build_multiplier(P)
    measured = sup_norm(u, (0, 0), r) if (u.mask & u.grid.disc_mask(0j, r)).any() else None
    if equation == "divergence":
        return _divergence_certificate(u, P, m, r, lam, c_interior, holomorphy_tol, measured)
    if equation == "gradient":
        return _gradient_certificate(u, P, m, r, lam, c_interior, holomorphy_tol, measured)
    raise ValueError(f"unknown equation {equation!r}")


def _factorize(g: ComplexField, coeff: ComplexField, rho: float):
    coeff_in = coeff.restrict((0, 0), rho)
    g_in = ComplexField(g.grid, g.values, g.mask & coeff_in.mask)
    fac = dbar_mod.similarity_factorize(g_in, coeff_in, r_inner=rho - 0.1)
    return fac


def _divergence_certificate(u, P, m, r, lam, c_interior, holomorphy_tol, measured) -> OrderEstimate:
    rs = reduce_divergence_form(u, m, P.W)
    fac = _factorize(rs.g, rs.coeff, WORKING)
    ratio = dbar_mod.holomorphy_ratio(fac.h, (0, 0), R2)
    osc = _osc_re(fac.w, R2)
    phi = m.phi
    phi_min_r1 = float(np.min(phi.values[phi.mask & phi.grid.disc_mask(0j, R1)]))
    phi_max = sup_norm(phi, (0, 0), R2)
    phi_min = float(np.min(phi.values[phi.mask & phi.grid.disc_mask(0j, R2)]))
    # |g|_{B_{r/2}} <= T |u|_{B_r}: |vt| on B_{r/2} through the interior gradient bound for v
    transfer = phi_max + phi_max**2 / phi_min * (0.5 * c_interior * lam + 0.5 * P.K * r)
    th = theta(r, R1, R2, "halved")
    sup_mid = sup_norm(u, (0, 0), R1)
    sup_outer = sup_norm(u, (0, 0), R2)
    g_outer = sup_norm(rs.g, (0, 0), R2)
    log_p = osc + th * np.log(transfer) + (1 - th) * np.log(g_outer / sup_outer) - np.log(phi_min_r1)
    cert = ThreeCircleCertificate(r, R1, R2, th, measured if measured else np.nan, sup_mid, sup_outer,
                                  float(log_p), "halved")
    residuals = {"dbar_g": rs.residual, "holomorphy": ratio, "dbar_h": fac.residual,
                 "multiplier": m.residual, "osc_re_w": osc}
    valid = ratio <= holomorphy_tol
    if not valid:
        log.warning("certificate invalid: holomorphy ratio %.3g", ratio)
    return OrderEstimate(cert.order_bound, cert, lam, valid, "divergence", residuals, measured_sup=measured)


def _gradient_certificate(u, P, m, r, lam, c_interior, holomorphy_tol, measured) -> OrderEstimate:
    case = gradient_case_analysis(u, m)
    th = theta(r, *GRADIENT_RADII, "halved")
    if case.branch == "positive":
        # |u|_{B_r} >= a directly
        cert = ThreeCircleCertificate(r, *GRADIENT_RADII, th, measured if measured else np.nan,
                                      case.a, 1.0, 0.0, "halved")
        E = float(np.log(case.a) / np.log(r))
        return OrderEstimate(E, cert, lam, True, "gradient", {}, "positive", measured)
    us = u if case.sign > 0 else ScalarField(u.grid, -u.values, u.mask)
    v = to_divergence_form(us, m)
    G, Wt, res = drift_reduction(v, m, P.W)
    fac = _factorize(G, Wt, WORKING)
    ratio = dbar_mod.holomorphy_ratio(fac.h, (0, 0), GRADIENT_RADII[1] - 0.05)
    osc = _osc_re(fac.w, WORKING)
    phi = m.phi
    phi_min = float(np.min(phi.values[phi.mask & phi.grid.disc_mask(0j, WORKING)]))
    sup_mid = 0.5 * case.gradient_bound  # |G| = |grad v| / 2
    sup_outer = sup_norm(G, (0, 0), GRADIENT_RADII[1] - G.h)
    # |G|_{B_{r/2}} <= (c lam / (2 r phi_min)) |u|_{B_r}
    transfer = 0.5 * c_interior * lam / (r * phi_min)
    log_p = osc + th * np.log(transfer)
    cert = ThreeCircleCertificate(r, *GRADIENT_RADII, th, measured if measured else np.nan,
                                  sup_mid, sup_outer, float(log_p), "halved")
    residuals = {"dbar_G": res, "holomorphy": ratio, "multiplier": m.residual, "osc_re_w": osc}
    valid = ratio <= holomorphy_tol
    return OrderEstimate(cert.order_bound, cert, lam, valid, "gradient", residuals, "gradient", measured)


def model_order_certificate(u_sup: Callable[[float], float], w: ComplexField, r: float,
                            r1: float = 1.0, r2: float = 1.5) -> ThreeCircleCertificate:
    """Certificate for ``u = exp(w) f``, ``f`` holomorphic, from the sup-norms of ``u`` (standard variant)."""
    th = theta(r, r1, r2, "standard")
    osc = _osc_re(w, r2)
    return ThreeCircleCertificate(r, r1, r2, th, u_sup(r), u_sup(r1), u_sup(r2), osc, "standard")


@dataclass(frozen=True, eq=False)
class ModelOrder:
    exponents: np.ndarray
    radii: np.ndarray
    measured: np.ndarray
    fitted_c: float
    osc_re_w: float
    sound: bool


def model_dbar_order(V: Field, f: Callable, M: float, radii=None, r1: float = 1.0, r2: float = 1.5) -> ModelOrder:
    """The model problem ``dbar u = V u`` on B_2 with ``u = exp(w) f``.

    Returns the certified exponents over ``radii``, the measured sup-norms of
    ``u`` and the fitted ``c = max_r E(r) / M``.
    """
    if radii is None:
        # lattice multiples of h from 4h, so axis maxima are nodes
        h = V.grid.h
        radii = np.unique(np.round(np.geomspace(max(0.01, 4 * h), 0.5, 8) / h)) * h
    radii = np.asarray(radii, float)
    if sup_norm(V) > M * (1 + 1e-12):
        raise ValueError("|V| exceeds M")
    w = dbar_mod.cauchy_transform(V)
    fv = f(w.grid.Z)
    u = ComplexField(w.grid, np.where(w.mask, np.exp(w.filled(0)) * fv, 0), w.mask)
    if sup_norm(u, (0, 0), r1) < 1 - 1e-12:
        raise ValueError("normalization |u|_{B_1} >= 1 violated")
    fmid = sup_norm(ComplexField(w.grid, fv, w.mask), (0, 0), r1)
    fout = sup_norm(ComplexField(w.grid, fv, w.mask), (0, 0), r2)
    if fmid == 0 or fout / fmid > 1e12:
        raise ValueError("degenerate certificate: holomorphic factor vanishes or is extremely flat")

    def usup(rho):
        return sup_norm(u, (0, 0), rho)

    certs = [model_order_certificate(usup, w, r, r1, r2) for r in radii]
    E = np.array([c.order_bound for c in certs])
    measured = np.array([usup(r) for r in radii])
    sound = bool(np.all(measured >= radii**E * (1 - 1e-9)))
    return ModelOrder(E, radii, measured, float(np.max(E) / M), certs[0].log_premultiplier, sound)


def empirical_order(u: Field, radii, center=(0.0, 0.0)) -> float:
    """Least-squares slope of ``log sup_{B_r} |u|`` against ``log r``."""
    radii = np.asarray(radii, float)
    if radii.size < 4:
        raise ValueError("need at least 4 radii")
    if radii.max() / radii.min() < 10 - 1e-9:
        raise ValueError("radii must span a decade")
    if radii.min() < 4 * u.h - 1e-12:
        raise ValueError(f"radii must be >= 4h = {4 * u.h:.4g}")
    sups = np.array([sup_norm(u, center, r) for r in radii])
    if np.any(sups == 0):
        return float("inf")
    slope = np.polyfit(np.log(radii), np.log(sups), 1)[0]
    return float(slope)


def default_radii(u: Field, count: int = 6, r_max: float | None = None) -> np.ndarray:
    """``count`` lattice-aligned radii from ``4h`` spanning at least a decade."""
    h = u.h
    lo = 4 * h
    hi = max(r_max or 0.0, 10 * lo)
    return np.unique(np.round(np.geomspace(lo, hi, count) / h) * h)


def gradient_sup(v: ScalarField, r: float) -> float:
    return sup_norm(grad_norm(v), (0, 0), r)


def certified_exponents(estimates) -> np.ndarray:
    return np.array([e.exponent for e in estimates])


def coefficient_bound_ok(m: Multiplier, W, g: ComplexField, rho: float = WORKING) -> bool:
    """``|gamma_t| <= 2 |gamma|`` on ``B_rho``."""
    c, ct = coefficients(m, W, g)
    sel = c.mask & ct.mask & g.grid.disc_mask(0j, rho)
    return bool(np.all(np.abs(ct.values[sel]) <= 2 * np.abs(c.values[sel]) * (1 + 1e-12) + 1e-300))
