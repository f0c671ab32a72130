"""Carleman weight, the exterior key inequality and its term budget.

The weight ``phi_tau(z) = -tau log|z| + |z|^2`` has ``lap phi_tau = 4``, so for
``h`` compactly supported in ``B_{7/5} minus 0``

    int |dbar h|^2 e^{phi_tau} >= int |h|^2 e^{phi_tau}.

Applied to the cut-off reduction of an exterior solution this bounds the mass
near ``zhat`` by four terms; the first carries the mass near the far point and
the other three must be absorbed.  Everything is kept in log space, since the
weights reach ``exp(10^3)`` and beyond.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.special import k0, logsumexp

from .dbar import anchored_envelope
from .geometry import SMOOTHSTEP_MAX_SLOPE, CutoffGeometry, smoothstep
from .grid import ComplexField, GridSpec, ScalarField, as_complex, dbar, integrate
from .multiplier import Multiplier, PotentialPair, build_multiplier, lipschitz_constant, local_bounds, normalize_at
from .reduction import reduce_exterior

__all__ = [
    "CarlemanWeight", "CutoffGeometry", "weight", "weight_laplacian_check", "carleman_verify",
    "random_test_function", "tau_schedule", "TermConstants", "ExteriorTerms", "rhs_terms",
    "strip_tau_constant", "exterior_pipeline", "ExteriorResult", "bessel_exterior_sample",
]

log = logging.getLogger(__name__)

WORKING_RADIUS = 7 / 5
A_PRIORI_TOL = 1e-9


@dataclass(frozen=True)
class CarlemanWeight:
    tau: float

    def __post_init__(self):
        if not self.tau > 8:
            raise ValueError(f"tau must exceed 8, got {self.tau}")

    def __call__(self, z):
        return weight(self.tau, z)

    def radial(self, rho):
        rho = np.asarray(rho, float)
        return -self.tau * np.log(rho) + rho * rho


def weight(tau: float, z):
    """``-tau log|z| + |z|^2``."""
    r = np.abs(np.asarray(z, complex) if not isinstance(z, tuple) else as_complex(z))
    if np.any(r == 0):
        raise ValueError("the weight is singular at z = 0")
    out = -tau * np.log(r) + r * r
    return float(out) if np.ndim(out) == 0 else out


def weight_laplacian_check(tau: float = 10.0, grid: GridSpec | None = None, r_min: float = 0.5) -> float:
    """Mean five-point Laplacian of the weight over ``r_min <= |z| <= 7/5`` (should be 4)."""
    g = GridSpec(n=256) if grid is None else grid
    r = np.abs(g.Z)
    safe = np.where(r > 0, g.Z, 1.0)
    f = ScalarField(g, np.where(r > 0, weight(tau, safe), 0.0), g.mask & (r > 0))
    from .grid import laplacian
    lap = laplacian(f)
    sel = lap.mask & (r >= r_min) & (r <= WORKING_RADIUS)
    return float(np.mean(lap.values[sel]))


class CarlemanCheck(NamedTuple):
    lhs: float
    rhs: float
    log_scale: float  # both integrals are multiplied by exp(-log_scale)

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else float("inf")


def carleman_verify(h: ComplexField, tau: float, margin_rings: int = 2) -> CarlemanCheck:
    """Quadrature of both sides of the Carleman inequality for a compactly supported ``h``."""
    CarlemanWeight(tau)
    g = h.grid
    if not g.contains(0j) or g.radius < WORKING_RADIUS:
        raise ValueError("grid must cover B_7/5")
    r = np.abs(g.Z)
    vals = h.filled(0.0)
    supp = np.abs(vals) > 0
    pad = margin_rings * g.h
    if np.any(supp & ((r < pad) | (r > WORKING_RADIUS - pad))):
        raise ValueError("h must vanish near 0 and near the circle |z| = 7/5")
    if not supp.any():
        return CarlemanCheck(0.0, 0.0, 0.0)
    phi = np.where(r > 0, -tau * np.log(np.where(r > 0, r, 1)) + r * r, -np.inf)
    scale = float(np.max(phi[supp]))
    wgt = np.exp(phi - scale)
    db = dbar(ComplexField(g, vals, g.mask))
    lhs = float(np.sum((np.abs(db.filled(0.0)) ** 2 * wgt)[db.mask])) * g.h**2
    rhs = float(np.sum((np.abs(vals) ** 2 * wgt)[g.mask])) * g.h**2
    return CarlemanCheck(lhs, rhs, scale)


def random_test_function(grid: GridSpec, rng: np.random.Generator, r_min: float = 0.15,
                         r_max: float = 1.3, degree: int = 3) -> ComplexField:
    """Smooth random ``h`` supported in ``r_min <= |z| <= r_max``.

    Either a radial bump times a random polynomial in ``z, conj z``, or an
    off-centre bump on a disc clear of the origin times a random polynomial.
    """
    Z = grid.Z
    coef = rng.normal(size=(degree + 1, degree + 1)) + 1j * rng.normal(size=(degree + 1, degree + 1))
    poly = sum(coef[p, q] * Z**p * np.conj(Z) ** q for p in range(degree + 1) for q in range(degree + 1 - p))
    if rng.random() < 0.5:
        a = rng.uniform(r_min, 0.5 * (r_min + r_max))
        b = rng.uniform(a + 0.2, r_max)
        r = np.abs(Z)
        t = (r - a) / (b - a)
        bump = smoothstep(4 * t) * smoothstep(4 * (1 - t))
    else:
        rho = rng.uniform(0.1, 0.4)
        dist = rng.uniform(r_min + rho, r_max - rho)
        c = dist * np.exp(1j * rng.uniform(0, 2 * np.pi))
        s = np.abs(Z - c) / rho
        bump = smoothstep(2 * (1 - s))
    vals = np.where(grid.mask, bump * poly, 0)
    return ComplexField(grid, vals, grid.mask)


def tau_schedule(A: float, R: float, Ctilde: float) -> float:
    """``Ctilde AR log(AR)``."""
    s = A * R
    if s <= np.e:
        raise ValueError(f"need AR > e, got AR = {s}")
    tau = Ctilde * s * np.log(s)
    if tau <= 8:
        raise ValueError(f"tau = {tau:.4g} does not exceed 8")
    return float(tau)


def strip_tau_constant(geom: CutoffGeometry) -> float:
    """Largest ``c`` with ``log(|z| / rho1) >= c |x + 1/A|`` on the correction strip.

    ``rho1 = 1/A + 1/(AR)``.  On the strip ``|z| >= |x|``, so it suffices to
    minimize ``log(|x| / rho1) / (|x| - 1/A)`` over ``a <= -|x|``, ``|x| <= 6/5``;
    the minimum sits at the near end, where ``rho1`` eats part of the gap.
    """
    rho1 = 1 / geom.A + 1 / geom.scale
    xs = np.linspace(-geom.a, 6 / 5, 2001)
    return float(np.min(np.log(xs / rho1) / (xs - 1 / geom.A)))


@dataclass(frozen=True)
class TermConstants:
    """Constants of the four-term inequality.

    ``C`` is the prefactor ``C (AR)^C``, ``c_w`` the exponent in
    ``exp(c_w AR log AR)`` and ``c_tau`` the coefficient of ``tau`` in the
    correction term.  ``log_left`` is subtracted from every term (the lower
    bound factor of ``|h|^2`` on the ``zhat`` ball) and ``log_g`` is added to the
    cutoff-annulus term.
    """

    C: float = 1.0
    c_w: float = 1.0
    c_tau: float = 1.0
    log_left: float = 0.0
    log_g: float = 0.0


@dataclass(frozen=True)
class ExteriorTerms:
    R: float
    A: float
    tau: float
    log_terms: tuple  # (i), (ii), (iii), (iv)
    log_lhs: float
    tau_admissible: bool

    @property
    def terms(self) -> np.ndarray:
        with np.errstate(under="ignore", over="ignore"):
            return np.exp(np.array(self.log_terms))

    @property
    def log_absorbed(self) -> float:
        """log of terms (ii) + (iii) + (iv)."""
        return float(logsumexp(self.log_terms[1:]))

    @property
    def absorbs(self) -> bool:
        return bool(self.tau_admissible and self.log_absorbed < self.log_lhs + np.log(0.5))


def _disc_integral(func: Callable, center: complex, radius: float, n: int = 96) -> float:
    """Midpoint polar quadrature of ``|func|^2`` over a disc."""
    dr, dt = radius / n, 2 * np.pi / (4 * n)
    rr = (np.arange(n) + 0.5) * dr
    tt = (np.arange(4 * n) + 0.5) * dt
    Rg, Tg = np.meshgrid(rr, tt)
    z = center + Rg * np.exp(1j * Tg)
    vals = np.abs(func(z.real, z.imag)) ** 2
    return float(np.sum(vals * Rg) * dr * dt)


def _annulus_points(center: complex, r_in: float, r_out: float, nr: int = 9, nt: int = 512) -> np.ndarray:
    rr = np.linspace(r_in, r_out, nr)
    tt = 2 * np.pi * np.arange(nt) / nt
    return (center + rr[:, None] * np.exp(1j * tt[None, :])).ravel()


def _sup_on(func: Callable, pts: np.ndarray) -> float:
    return float(np.max(np.abs(func(pts.real, pts.imag))))


def rhs_terms(geom: CutoffGeometry, tau: float, u_R: Callable | None = None,
              constants: TermConstants | None = None, C0: float = 1.0) -> ExteriorTerms:
    """The four right-hand terms and the left side of the key inequality, in log space.

    (i)   ``C(AR)^C exp(c_w AR log AR) e^{phi(1/(4AR)) - phi(rho1)} int_{B_{1/(AR)}(0)} |u_R|^2``
    (ii)  ``C(AR)^C exp(c_w AR log AR) e^{phi(1) - phi(rho1)}``
    (iii) ``C(AR)^C e^{phi(1/A + 29/(8AR)) - phi(rho1)}``
    (iv)  ``exp((c_w AR log AR - c_tau tau) 11/(8AR))``

    with ``rho1 = 1/A + 1/(AR)``.  Without ``u_R`` the integral in (i) is one
    and the left side is the a-priori floor ``C0 / (AR)^2``; with ``u_R`` (a
    vectorized ``(x, y) -> u``) the integrals are measured and (ii), (iii) are
    scaled by the measured ``sup |u_R|^2`` on ``Y`` and on the cutoff annulus.
    """
    k = constants or TermConstants()
    wt = CarlemanWeight(tau)
    s, A = geom.scale, geom.A
    L = np.log(s)
    rho1 = 1 / A + 1 / s
    pre = np.log(k.C) + k.C * L - k.log_left
    grow = k.c_w * s * L
    t1 = pre + grow + wt.radial(1 / (4 * s)) - wt.radial(rho1)
    t2 = pre + grow + wt.radial(1.0) - wt.radial(rho1)
    t3 = pre + k.log_g + wt.radial(1 / A + 29 / (8 * s)) - wt.radial(rho1)
    slope = grow - k.c_tau * tau
    t4 = slope * 11 / (8 * s) - k.log_left
    admissible = bool(slope < 0)
    if not admissible:
        log.warning("tau = %.4g too small: c_w AR log AR - c_tau tau = %.4g >= 0", tau, slope)
    if u_R is None:
        lhs = np.log(C0) - 2 * L
    else:
        with np.errstate(divide="ignore"):
            i0 = _disc_integral(u_R, 0j, 1 / s)
            lhs = np.log(_disc_integral(u_R, geom.zhat, 1 / s))
            t1 = t1 + np.log(i0)
            t2 = t2 + 2 * np.log(_sup_on(u_R, _annulus_points(0j, 1.0, 6 / 5)))
            t3 = t3 + 2 * np.log(_sup_on(u_R, _annulus_points(geom.z1, geom.chi_inner, geom.chi_outer)))
    return ExteriorTerms(geom.R, A, tau, (float(t1), float(t2), float(t3), float(t4)), float(lhs), admissible)


def absorbing_tau(geom: CutoffGeometry, tau0: float, log_target: float, u_R: Callable | None = None,
                  constants: TermConstants | None = None) -> float:
    """Smallest ``tau >= tau0`` with each of terms (ii), (iii), (iv) at most ``exp(log_target)``.

    All three are affine in ``tau`` with negative slope, so one secant step is exact.
    """
    t0 = np.array(rhs_terms(geom, tau0, u_R, constants).log_terms[1:])
    t1 = np.array(rhs_terms(geom, tau0 + 1.0, u_R, constants).log_terms[1:])
    slope = t1 - t0
    if np.any(slope >= 0):
        raise ValueError("a right-hand term does not decrease with tau")
    need = tau0 + (log_target - t0) / slope
    return float(max(tau0, need.max() * (1 + 1e-9)))


def bessel_exterior_sample():
    """``u = K_0(|z|)``: bounded by ``K_0(1) < 1`` outside ``B_1`` and ``lap u = u`` there."""

    def u(x, y):
        return k0(np.hypot(x, y))

    def V(x, y):
        return np.ones_like(np.asarray(x, float))

    return u, V


@dataclass(frozen=True, eq=False)
class ExteriorResult:
    R: float
    A: float
    tau: float
    terms: ExteriorTerms
    constants: TermConstants
    mass_floor: float          # inf over |z0| = 5/2 of int_{B_1(z0)} |u|^2
    log_certified_mass: float  # lower bound for log int_{B_1(z0)} |u|^2
    measured_sup: float        # sup of |u| on B_1(z0)
    measured: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def ctilde(self) -> float:
        """Effective ``tau / (AR' log AR')``."""
        s = self.A * (self.R - 5 / 2)
        return float(self.tau / (s * np.log(s)))

    @property
    def log_certified_sup(self) -> float:
        """``sup_{B_1} |u| >= sqrt(mass / pi)``."""
        return 0.5 * (self.log_certified_mass - np.log(np.pi))

    @property
    def certified_sup(self) -> float:
        return float(np.exp(self.log_certified_sup))

    @property
    def exponent_constant(self) -> float:
        """``C'`` with certified sup ``= exp(-C' AR (log AR)^2)``."""
        s = self.A * (self.R - 5 / 2)
        return float(-self.log_certified_sup / (s * np.log(s) ** 2))

    @property
    def sound(self) -> bool:
        return bool(np.log(self.measured_sup) >= self.log_certified_sup)


class _quiet:
    """Silence the inadmissible-tau warning while probing the schedule."""

    def __enter__(self):
        self.level = log.level
        log.setLevel(logging.ERROR)

    def __exit__(self, *exc):
        log.setLevel(self.level)


def _mass_floor(u: Callable, radius: float = 5 / 2, n_angles: int = 64) -> float:
    t = 2 * np.pi * np.arange(n_angles) / n_angles
    return float(min(_disc_integral(u, radius * np.exp(1j * a), 1.0, 48) for a in t))


def _local_multiplier(m: Multiplier, grid: GridSpec) -> Multiplier:
    """Resample ``psi`` onto a finer local grid with a bicubic spline."""
    cg = m.grid
    sp = RectBivariateSpline(cg.y, cg.x, m.psi.filled(0.0), kx=3, ky=3)
    vals = sp(grid.y, grid.x)
    return Multiplier.from_psi(ScalarField(grid, vals, grid.mask), m.M, m.K, normalization_point=m.normalization_point)


def exterior_pipeline(u: Callable, V: Callable, A: float = 2.0, R: float = 20.0, Ctilde: float = 5.0,
                      n: int = 512, n_local: int = 256, n_envelope: int = 16,
                      constant_C: float = 1.0, check_absorption: bool = True,
                      adapt_tau: bool = True) -> ExteriorResult:
    """Certified lower bound for ``sup_{B_1(z0)} |u|`` with ``z0 = (R, 0)``.

    ``u`` and ``V`` are vectorized ``(x, y)`` evaluators on ``|z| >= 1``.  The
    origin moves to ``(5/2, 0)`` so the hole sits at ``-5/2``, and the far point
    becomes ``R' = R - 5/2``; the rest runs on ``B_2`` after rescaling by ``AR'``.
    With ``adapt_tau`` the schedule ``Ctilde AR' log AR'`` is raised to the
    smallest ``tau`` that absorbs the three remainder terms under the measured
    constants.
    """
    Rp = R - 5 / 2
    geom = CutoffGeometry(A, Rp)
    s = geom.scale
    tau = tau_schedule(A, Rp, Ctilde)

    def u_R(x, y):
        return u(s * np.asarray(x) + Rp + 5 / 2, s * np.asarray(y))

    g = GridSpec(n=n)
    hole = np.abs(g.Z - geom.z1) < geom.hole_radius
    out = g.mask & ~hole
    X, Y = s * g.X + Rp + 5 / 2, s * g.Y
    # a-priori checks
    usup = float(np.max(np.abs(u(X[out], Y[out]))))
    if usup > 1 + A_PRIORI_TOL:
        raise ValueError(f"a-priori bound |u| <= 1 outside B_1 violated: sup = {usup:.6g}")
    floor = _mass_floor(u)
    if not floor > 0:
        raise ValueError("a-priori mass condition fails: int_{B_1(z0)} |u|^2 = 0 for some |z0| = 5/2")

    Vs = np.zeros(g.shape)
    Vs[out] = s**2 * V(X[out], Y[out])
    P = PotentialPair(ScalarField(g, Vs, g.mask), None, max(float(Vs.max()), 1.0), 1.0)
    m = build_multiplier(P)
    if not np.all(np.isfinite(m.psi.masked())):
        raise FloatingPointError("multiplier underflows on this grid; reduce R")
    m = normalize_at(m, geom.zhat)

    # measured constants
    L = lipschitz_constant(m, WORKING_RADIUS)
    disc = g.disc_mask(0j, WORKING_RADIUS)
    strip_x = np.linspace(-6 / 5 + 0.02, geom.a, n_envelope)
    targets = np.concatenate([strip_x + 1j * yy for yy in (0.0, geom.chi_outer)])
    env = anchored_envelope(g, geom.zhat, targets, disc)
    c_w = float(np.max(L * env / (s * np.log(s) * np.abs(targets.real + 1 / A))))
    g_pts = _annulus_points(geom.z1, geom.chi_inner, geom.chi_outer, 3, 32)
    zhat_pts = _annulus_points(geom.zhat, 0.0, 1 / s, 3, 16)
    env_g = float(np.max(anchored_envelope(g, geom.zhat, g_pts, disc)))
    env_hat = float(np.max(anchored_envelope(g, geom.zhat, zhat_pts, disc)))
    sp = RectBivariateSpline(g.y, g.x, m.psi.filled(0.0))
    phi_hat_lo = float(np.exp(np.min(sp.ev(zhat_pts.imag, zhat_pts.real))))
    phi_g_hi = float(np.exp(np.max(sp.ev(g_pts.imag, g_pts.real))))
    chi_slope = SMOOTHSTEP_MAX_SLOPE / (geom.chi_outer - geom.chi_inner)
    area_g = np.pi * (geom.chi_outer**2 - geom.chi_inner**2)
    log_left = 2 * np.log(phi_hat_lo) - 2 * L * env_hat
    log_g = np.log(2) + 2 * np.log(phi_g_hi) + 2 * L * env_g + 2 * np.log(chi_slope / 2) + np.log(area_g)
    consts = TermConstants(constant_C, max(c_w, 1e-12), strip_tau_constant(geom), float(log_left), float(log_g))
    # absorption uses the a-priori floor for the left side; each absorbed term gets a sixth of it
    floor_lhs = np.log(floor) - 2 * np.log(s)
    if adapt_tau:
        with _quiet():
            tau = absorbing_tau(geom, tau, floor_lhs - np.log(6), u_R, consts)
    terms = rhs_terms(geom, tau, u_R, consts, floor)
    absorbed = terms.log_absorbed
    absorbs = bool(terms.tau_admissible and absorbed < floor_lhs + np.log(0.5))
    if check_absorption and not absorbs:
        raise RuntimeError(
            "absorption fails at R=%g: log terms (i..iv) = %s, log left floor = %.4g"
            % (R, np.round(terms.log_terms, 4).tolist(), floor_lhs))
    # term (i) >= left / 2:  int_{B_1(z0)} |u|^2 = (AR)^2 int_{B_{1/(AR)}(0)} |u_R|^2 >= floor / (2 K1)
    log_K1 = terms.log_terms[0] - np.log(_disc_integral(u_R, 0j, 1 / s))
    log_mass = np.log(floor) - np.log(2) - log_K1

    z0 = complex(R, 0.0)
    pts = _annulus_points(z0, 0.0, 1.0, 33, 256)
    measured_sup = _sup_on(u, pts)

    # reduction diagnostics on a fine local grid around (a, 0)
    lg = GridSpec((geom.a, 0.0), 4 / s, n_local)
    lhole = np.abs(lg.Z - geom.z1) < geom.hole_radius * (1 + 1e-9)
    lmask = lg.mask & ~lhole
    uv = np.zeros(lg.shape)
    uv[lmask] = u_R(lg.X[lmask], lg.Y[lmask])
    ul = ScalarField(lg, uv, lg.mask)
    ml = _local_multiplier(m, lg)
    rs, ident = reduce_exterior(ul, ml, geom)
    chi_support = np.abs(geom.dbar_chi(lg.Z)) > 0
    diagnostics = {
        "dbar_g_residual": rs.residual,
        "support_H1_outside_G": int(np.count_nonzero(chi_support & ~geom.regions(lg.Z)["G"])),
        **ident,
        "multiplier_residual": m.residual,
    }
    measured = {"lipschitz": L, "c_w": c_w, "c_tau": consts.c_tau, "phi_min_zhat": phi_hat_lo,
                "phi_max_G": phi_g_hi, "envelope_G": env_g, "envelope_zhat": env_hat,
                "log_lhs_measured": terms.log_lhs, "log_lhs_floor": float(floor_lhs), "absorbs": absorbs}
    return ExteriorResult(R, A, tau, terms, consts, floor, float(log_mass), measured_sup, measured, diagnostics)
