"""Rescaling entire solutions to the unit problem and Landis-type decay curves.

A solution on the plane is sampled on one large grid.  For a far point ``z0``
with ``|z0| = R`` the map ``z -> A R z + z0`` pulls it back to ``B_2`` where the
potential is amplified to ``(AR)^2 V`` and the drift to ``AR W``; the origin
lands at ``zhat = -z0 / (AR)``.  A certified local exponent ``E`` at radius
``1 / (AR)`` becomes the decay bound ``exp(-E log(AR))``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import GridSpec, ScalarField, as_complex, sup_norm
from .multiplier import PotentialPair, build_multiplier
from .order import vanishing_order_bound

log = logging.getLogger(__name__)

SAMPLE_TOL = 1e-9
MAX_SAMPLE_H = 0.25
STABILITY_TOL = 0.05


@dataclass(frozen=True, eq=False)
class EntireSample:
    """A solution on ``B_{R+2}`` with optional closed-form evaluators.

    ``exact``, ``potential`` and ``drift`` map ``(x, y)`` arrays to ``u``, ``V``
    and ``(W1, W2)``; when present they replace grid interpolation.
    """

    u: ScalarField
    V: ScalarField
    W: tuple[ScalarField, ScalarField] | None
    C0: float
    exact: Callable | None = None
    potential: Callable | None = None
    drift: Callable | None = None
    name: str = "sample"

    def __post_init__(self):
        g = self.u.grid
        r = np.abs(g.Z)[self.u.mask]
        growth = np.abs(self.u.values[self.u.mask]) * np.exp(-self.C0 * r)
        if growth.max() > 1 + SAMPLE_TOL:
            raise ValueError(f"|u| exceeds exp(C0 |z|) by factor {growth.max():.6g}")
        u0 = self.exact(0.0, 0.0) if self.exact is not None else self.u((0.0, 0.0))
        if abs(float(u0) - 1) > SAMPLE_TOL:
            raise ValueError(f"u(0) = {float(u0):.12g}, expected 1")

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    @property
    def M(self) -> float:
        return sup_norm(self.V)

    @property
    def K(self) -> float:
        if self.W is None:
            return 0.0
        return float(np.max(np.hypot(self.W[0].masked(), self.W[1].masked())))

    def evaluate(self, x, y) -> np.ndarray:
        if self.exact is not None:
            return np.asarray(self.exact(x, y), float) * np.ones_like(x, dtype=float)
        return _interp(self.u, x, y)

    def evaluate_potential(self, x, y) -> np.ndarray:
        if self.potential is not None:
            return np.asarray(self.potential(x, y), float) * np.ones_like(x, dtype=float)
        return _interp(self.V, x, y)

    def evaluate_drift(self, x, y):
        if self.drift is not None:
            w1, w2 = self.drift(x, y)
            return w1 * np.ones_like(x, dtype=float), w2 * np.ones_like(x, dtype=float)
        if self.W is None:
            return np.zeros_like(x, dtype=float), np.zeros_like(x, dtype=float)
        return _interp(self.W[0], x, y), _interp(self.W[1], x, y)


def _interp(f: ScalarField, x, y) -> np.ndarray:
    g = f.grid
    reach = np.hypot(np.asarray(x) - g.center[0], np.asarray(y) - g.center[1])
    if np.max(reach) > g.radius - 2 * g.h:
        raise ValueError("sample grid too small for the requested points")
    it = RegularGridInterpolator((g.y, g.x), f.filled(0.0), method="linear")
    pts = np.stack([np.ravel(y), np.ravel(x)], axis=-1)
    return it(pts).reshape(np.shape(x))


def sample_grid(R: float, n_max: int = 512, margin: float = 2.0) -> GridSpec:
    """Grid on ``B_{R+margin}`` with spacing ``1/k``, ``k`` as large as ``n_max`` allows.

    Integer points are nodes, so the extremal point ``(R - 1, 0)`` of an integer
    ``R`` is sampled exactly.
    """
    k = 1
    while 2 * int(np.ceil((R + margin) * (k + 1))) <= n_max:
        k += 1
    radius = np.ceil((R + margin) * k) / k
    n = int(round(2 * radius * k))
    g = GridSpec((0.0, 0.0), float(radius), n)
    if g.h > MAX_SAMPLE_H:
        raise ValueError(f"n_max={n_max} cannot resolve unit discs at R={R} (h={g.h:.3g})")
    return g


def exponential_sample(R: float, sign: float = -1.0, n_max: int = 512) -> EntireSample:
    """``u = exp(sign x)`` with ``V = 1``: ``lap u = u``."""
    g = sample_grid(R, n_max)

    def u(x, y):
        return np.exp(sign * np.asarray(x, float))

    def pot(x, y):
        return np.ones_like(np.asarray(x, float))

    return EntireSample(ScalarField.sample(g, u), ScalarField.constant(g, 1.0), None, 1.0,
                        u, pot, None, f"exp{'-' if sign < 0 else '+'}x")


def harmonic_sample(R: float, degree: int = 3, n_max: int = 512) -> EntireSample:
    """``u = 1 + Re z^n`` with ``V = 0``; ``1 + t^n <= exp(n t)`` gives ``C0 = n``."""
    g = sample_grid(R, n_max)

    def u(x, y):
        return 1 + np.real((np.asarray(x, float) + 1j * np.asarray(y, float)) ** degree)

    def pot(x, y):
        return np.zeros_like(np.asarray(x, float))

    return EntireSample(ScalarField.sample(g, u), ScalarField.constant(g, 0.0), None, float(degree),
                        u, pot, None, f"harmonic{degree}")


def rotate(s: EntireSample, angle: float) -> EntireSample:
    """The sample composed with the rotation by ``-angle``: ``u'(z) = u(e^{i angle} z)``."""
    c, sn = np.cos(angle), np.sin(angle)

    def back(x, y):
        return c * x - sn * y, sn * x + c * y

    g = s.grid
    inner = g.disc_mask(g.center, g.radius - 2 * g.h)

    def resample(f):
        x, y = back(g.X, g.Y)
        vals = np.zeros(g.shape)
        vals[inner] = f(x[inner], y[inner])
        return ScalarField(g, vals, inner)

    def u(x, y):
        return s.evaluate(*back(np.asarray(x, float), np.asarray(y, float)))

    def pot(x, y):
        return s.evaluate_potential(*back(np.asarray(x, float), np.asarray(y, float)))

    def drift(x, y):
        w1, w2 = s.evaluate_drift(*back(np.asarray(x, float), np.asarray(y, float)))
        # vectors rotate back with the frame
        return c * w1 + sn * w2, -sn * w1 + c * w2

    W = None
    if s.W is not None:
        W = (resample(lambda x, y: drift(x, y)[0]), resample(lambda x, y: drift(x, y)[1]))
    exact = u if s.exact is not None else None
    return EntireSample(resample(u), resample(pot), W, s.C0, exact,
                        pot if s.potential is not None else None,
                        drift if s.drift is not None else None, s.name)


@dataclass(frozen=True, eq=False)
class LocalProblem:
    u: ScalarField
    P: PotentialPair
    z0: complex
    A: float
    R: float
    C0: float  # growth constant of u on B_2 relative to sqrt(M) + K

    @property
    def scale(self) -> float:
        return self.A * self.R

    @property
    def zhat(self) -> complex:
        return -self.z0 / self.scale


def rescale(s: EntireSample, z0, A: float = 2.0, grid: GridSpec | None = None) -> LocalProblem:
    """``u_R(z) = u(AR z + z0)``, ``V_R = (AR)^2 V(AR z + z0)``, ``W_R = AR W(AR z + z0)``."""
    zc = as_complex(z0)
    R = abs(zc)
    if R < 4 or A < 1:
        raise ValueError(f"need |z0| >= 4 and A >= 1, got R={R}, A={A}")
    g = GridSpec(n=256) if grid is None else grid
    s_ = A * R
    X = s_ * g.X + zc.real
    Y = s_ * g.Y + zc.imag
    m = g.mask
    uR = np.zeros(g.shape)
    uR[m] = s.evaluate(X[m], Y[m])
    VR = np.zeros(g.shape)
    VR[m] = s_**2 * s.evaluate_potential(X[m], Y[m])
    w1, w2 = s.evaluate_drift(X[m], Y[m])
    W = None
    K = max(s_ * s.K, 1.0)
    if np.any(w1) or np.any(w2):
        a1, a2 = np.zeros(g.shape), np.zeros(g.shape)
        a1[m], a2[m] = s_ * w1, s_ * w2
        W = (ScalarField(g, a1, m), ScalarField(g, a2, m))
        K = max(K, float(np.max(np.hypot(a1[m], a2[m]))))
    M = max(s_**2 * s.M, float(VR[m].max()), 1.0)
    P = PotentialPair(ScalarField(g, VR, m), W, M, K)
    C0 = s.C0 * (R + g.radius * s_) / P.lam
    return LocalProblem(ScalarField(g, uR, m), P, zc, A, R, C0)


def log_landis_bound(order_exponent: float, R: float, A: float = 1.0) -> float:
    """``-E log(AR)``: the log of the certified decay bound."""
    return -float(order_exponent) * float(np.log(A * R))


def landis_bound(order_exponent: float, R: float, A: float = 1.0) -> float:
    """``exp(-E log(AR))``; underflows to 0 for large ``E``, use the log form then."""
    return float(np.exp(log_landis_bound(order_exponent, R, A)))


def _angles(n_angles: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n_angles) / n_angles


def inf_sup_profile(s: EntireSample, R: float, n_angles: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """``sup_{B_1(z0)} |u|`` for ``z0`` at ``n_angles`` equally spaced points of ``|z0| = R``."""
    if n_angles < 8:
        raise ValueError("n_angles must be at least 8")
    g = s.grid
    if R + 1 > g.radius * (1 + 1e-12) or g.h > MAX_SAMPLE_H:
        raise ValueError(f"grid (radius {g.radius}, h {g.h:.3g}) does not resolve unit discs at R={R}")
    t = _angles(n_angles)
    # window the search to the annulus R - 1 <= |z| <= R + 1
    band = s.u.mask & (np.abs(np.abs(g.Z) - R) <= 1 + 1e-9)
    zb = g.Z[band]
    vb = np.abs(s.u.values[band])
    sups = np.empty(n_angles)
    for k, a in enumerate(t):
        sel = np.abs(zb - R * np.exp(1j * a)) <= 1 + 1e-12
        sups[k] = vb[sel].max()
    return t, sups


def inf_sup_measure(s: EntireSample, R: float, n_angles: int = 64) -> float:
    """``min_{|z0| = R} sup_{B_1(z0)} |u|`` over ``n_angles`` directions."""
    return float(inf_sup_profile(s, R, n_angles)[1].min())


def inf_sup_stable(s: EntireSample, R: float, n_angles: int = 64, tol: float = STABILITY_TOL) -> bool:
    """Doubling the number of directions must change the infimum by less than ``tol``."""
    a = inf_sup_measure(s, R, n_angles)
    b = inf_sup_measure(s, R, 2 * n_angles)
    return bool(abs(a - b) <= tol * max(abs(a), abs(b)))


@dataclass(frozen=True)
class LandisPoint:
    R: float
    measured: float
    log_certified: float
    exponent: float
    lam: float
    source: str  # "pipeline" or "fitted"
    stable: bool

    @property
    def certified(self) -> float:
        return float(np.exp(self.log_certified))

    @property
    def sound(self) -> bool:
        return bool(np.log(self.measured) >= self.log_certified)


@dataclass(frozen=True, eq=False)
class LandisCurve:
    family: str
    A: float
    points: list = field(default_factory=list)
    fitted_constant: float = float("nan")

    def rows(self):
        for p in self.points:
            yield p.R, p.measured, p.certified, p.log_certified, p.exponent, p.source


def landis_curve(make_sample: Callable[[float], EntireSample], R_list, A: float = 2.0,
                 n_local: int = 256, n_angles: int = 64) -> LandisCurve:
    """Measured inf-sup against the certified decay bound for each ``R``.

    Each ``R`` rotates the worst direction onto the positive axis, rescales and
    runs the local certificate at ``r = 1/(AR)``.  When the local grid cannot
    resolve the amplified potential the certificate is invalid and the exponent
    falls back to ``C lam`` with ``C`` the largest ``E / lam`` among the valid
    runs; those points are marked ``"fitted"``.
    """
    raw = []
    for R in R_list:
        s = make_sample(R)
        t, sups = inf_sup_profile(s, R, n_angles)
        k = int(np.argmin(sups))
        stable = inf_sup_stable(s, R, n_angles)
        if not stable:
            log.warning("inf-sup at R=%g changes by more than %.0f%% when doubling angles", R, 100 * STABILITY_TOL)
        local = rescale(rotate(s, t[k]) if t[k] else s, (R, 0.0), A, GridSpec(n=n_local))
        est = None
        try:
            m = build_multiplier(local.P)
            est = vanishing_order_bound(local.u, local.P, local.C0, 1 / local.scale, m=m)
        except (OverflowError, ValueError, FloatingPointError) as exc:
            log.info("local certificate failed at R=%g: %s", R, exc)
        raw.append((R, float(sups[k]), local.P.lam, est, stable))
    ratios = [e.constant for (_, _, _, e, _) in raw if e is not None and e.valid]
    if not ratios:
        raise RuntimeError("no R in the list produced a valid local certificate")
    C = max(ratios)
    pts = []
    for R, meas, lam, est, stable in raw:
        if est is not None and est.valid:
            E, src = est.exponent, "pipeline"
        else:
            E, src = C * lam, "fitted"
        pts.append(LandisPoint(R, meas, log_landis_bound(E, R, A), E, lam, src, stable))
    return LandisCurve(make_sample(R_list[0]).name, A, pts, C)
