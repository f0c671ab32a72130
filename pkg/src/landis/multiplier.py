"""Positive multipliers for ``L* phi = lap(phi) + W . grad(phi) - V phi = 0`` on B_2.

The multiplier is the largest solution lying under the constant supersolution
``exp(2 lam)``, ``lam = sqrt(M) + K``.  On the grid it is computed from the
subsolution ``exp(lam x)`` either by red-black Gauss-Seidel sweeps (a monotone
iteration: every sweep can only raise the iterate) or by one exact sparse solve,
which is the limit of that iteration.  Both work on ``phi / exp(2 lam)`` so the
boundary data is 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    ComplexField,
    GridSpec,
    ScalarField,
    as_complex,
    grad_norm,
    gradient,
    integrate,
    interior_mask,
    interpolate,
    sup_norm,
)

log = logging.getLogger(__name__)

NEG_NOISE = 1e-9
WORKING_RADIUS = 7 / 5


@dataclass(frozen=True, eq=False)
class PotentialPair:
    """Potential ``V >= 0`` with bound ``M`` and drift ``W`` with bound ``K``."""

    V: ScalarField
    W: tuple[ScalarField, ScalarField] | None = None
    M: float = 1.0
    K: float = 1.0

    def __post_init__(self):
        if self.M < 1 or self.K < 1:
            raise ValueError(f"bounds must satisfy M >= 1, K >= 1 (got M={self.M}, K={self.K})")
        vmin = float(np.min(self.V.masked()))
        if vmin < -NEG_NOISE:
            raise ValueError(f"V must be nonnegative, min V = {vmin:.3g}")
        if vmin < 0:
            object.__setattr__(self, "V", ScalarField(self.V.grid, np.maximum(self.V.values, 0), self.V.mask))
        if sup_norm(self.V) > self.M * (1 + 1e-12):
            raise ValueError(f"sup V = {sup_norm(self.V):.6g} exceeds M = {self.M}")
        if self.W is not None:
            w1, w2 = self.W
            if w1.grid != self.V.grid or w2.grid != self.V.grid:
                raise ValueError("V and W must share a grid")
            wn = np.hypot(w1.masked(), w2.masked())
            if wn.max() > self.K * (1 + 1e-12):
                raise ValueError(f"sup |W| = {wn.max():.6g} exceeds K = {self.K}")

    @property
    def grid(self) -> GridSpec:
        return self.V.grid

    @property
    def lam(self) -> float:
        return float(np.sqrt(self.M) + self.K)

    def drift_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self.W is None:
            z = np.zeros(self.grid.shape)
            return z, z
        return self.W[0].filled(0.0), self.W[1].filled(0.0)


def constant_potential(grid: GridSpec, M: float, K: float = 1.0, value: float | None = None,
                       drift=(0.0, 0.0)) -> PotentialPair:
    """``V`` identically ``value`` (default ``M``) and constant drift."""
    v = M if value is None else value
    W = None
    if drift[0] or drift[1]:
        W = (ScalarField.constant(grid, float(drift[0])), ScalarField.constant(grid, float(drift[1])))
    return PotentialPair(ScalarField.constant(grid, float(v)), W, M, K)


def half_plane_potential(grid: GridSpec, M: float, K: float = 1.0) -> PotentialPair:
    """``V = M`` on ``x > 0`` and 0 elsewhere."""
    V = ScalarField.sample(grid, lambda x, y: np.where(x > 0, M, 0.0))
    return PotentialPair(V, None, M, K)


def _random_smooth(grid: GridSpec, rng: np.random.Generator, modes: int = 8, kmax: float = 3.0):
    k = rng.uniform(-kmax, kmax, size=(modes, 2))
    amp = rng.normal(size=modes)
    phase = rng.uniform(0, 2 * np.pi, size=modes)
    X, Y = grid.X, grid.Y
    out = np.zeros(grid.shape)
    for (kx, ky), a, p in zip(k, amp, phase):
        out += a * np.cos(kx * X + ky * Y + p)
    return out


def random_potential(grid: GridSpec, M: float, K: float = 1.0, seed: int = 0,
                     with_drift: bool = True) -> PotentialPair:
    """Smooth random ``0 <= V <= M`` attaining ``M``, and ``|W| <= K`` attaining ``K``."""
    rng = np.random.default_rng(seed)
    m = grid.mask
    F = _random_smooth(grid, rng)
    s = (F - F[m].min()) / (F[m].max() - F[m].min())
    V = ScalarField(grid, M * s, m)
    W = None
    if with_drift:
        f1, f2 = _random_smooth(grid, rng), _random_smooth(grid, rng)
        scale = K / np.hypot(f1[m], f2[m]).max()
        W = (ScalarField(grid, f1 * scale, m), ScalarField(grid, f2 * scale, m))
    return PotentialPair(V, W, M, K)


@dataclass(frozen=True, eq=False)
class Multiplier:
    phi: ScalarField
    psi: ScalarField
    M: float
    K: float
    normalization_point: complex | None = None
    residual: float = 0.0  # sup of the discrete L* phi / exp(2 lam) on the interior
    iterations: int = 0
    monotone: bool = True
    history: list = field(default_factory=list)

    @property
    def lam(self) -> float:
        return float(np.sqrt(self.M) + self.K)

    @property
    def grid(self) -> GridSpec:
        return self.phi.grid

    @classmethod
    def from_phi(cls, phi: ScalarField, M: float = 1.0, K: float = 1.0, **kw) -> "Multiplier":
        if np.min(phi.masked()) <= 0:
            raise ValueError("multiplier must be positive")
        return cls(phi, ScalarField(phi.grid, np.log(phi.filled(1.0)), phi.mask), M, K, **kw)

    @classmethod
    def from_psi(cls, psi: ScalarField, M: float = 1.0, K: float = 1.0, **kw) -> "Multiplier":
        phi = ScalarField(psi.grid, np.exp(psi.filled(0.0)), psi.mask)
        return cls(phi, ScalarField(psi.grid, np.log(phi.filled(1.0)), psi.mask), M, K, **kw)


def check_subsolution(lam: float, P: PotentialPair) -> ScalarField:
    """``L* exp(lam x)`` evaluated exactly at the nodes."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    g = P.grid
    W1, _ = P.drift_arrays()
    e = np.exp(lam * g.X)
    res = (lam**2 - P.V.filled(0.0)) * e + lam * e * W1
    return ScalarField(g, res, P.V.mask)


def _stencil(P: PotentialPair):
    """Neighbour weights of the normalized Gauss-Seidel update (all >= 0)."""
    h = P.grid.h
    W1, W2 = P.drift_arrays()
    if P.K * h > 2:
        raise ValueError(f"grid too coarse for drift: K*h = {P.K * h:.3g} > 2")
    ce = 1 / h**2 + W1 / (2 * h)
    cw = 1 / h**2 - W1 / (2 * h)
    cn = 1 / h**2 + W2 / (2 * h)
    cs = 1 / h**2 - W2 / (2 * h)
    diag = 4 / h**2 + P.V.filled(0.0)
    return ce, cw, cn, cs, diag


def _apply(phi: np.ndarray, ce, cw, cn, cs, diag) -> np.ndarray:
    """Discrete ``L* phi`` on the full lattice (garbage on the outer frame)."""
    out = -diag * phi
    out[:, :-1] += ce[:, :-1] * phi[:, 1:]
    out[:, 1:] += cw[:, 1:] * phi[:, :-1]
    out[:-1, :] += cn[:-1, :] * phi[1:, :]
    out[1:, :] += cs[1:, :] * phi[:-1, :]
    return out


def _solve_direct(P: PotentialPair, interior: np.ndarray, start: np.ndarray) -> np.ndarray:
    ce, cw, cn, cs, diag = _stencil(P)
    shape = interior.shape
    idx = -np.ones(shape, dtype=np.int64)
    nodes = np.flatnonzero(interior)
    idx.flat[nodes] = np.arange(nodes.size)
    J, I = np.unravel_index(nodes, shape)
    rows, cols, vals = [np.arange(nodes.size)], [np.arange(nodes.size)], [diag[J, I]]
    rhs = np.zeros(nodes.size)
    for (dj, di), c in (((0, 1), ce), ((0, -1), cw), ((1, 0), cn), ((-1, 0), cs)):
        nb = idx[J + dj, I + di]
        coef = c[J, I]
        inner = nb >= 0
        rows.append(np.flatnonzero(inner))
        cols.append(nb[inner])
        vals.append(-coef[inner])
        rhs[~inner] += coef[~inner] * start[J + dj, I + di][~inner]
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nodes.size, nodes.size))
    # diagonal pivoting keeps the elimination free of cancellation on this M-matrix
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options=dict(SymmetricMode=True))
    out = start.copy()
    out.flat[nodes] = lu.solve(rhs)
    return out


def _solve_gauss_seidel(P: PotentialPair, interior: np.ndarray, start: np.ndarray,
                        tol: float, max_iter: int):
    ce, cw, cn, cs, diag = _stencil(P)
    phi = start.copy()
    J, I = np.indices(phi.shape)
    colours = [interior & ((J + I) % 2 == c) for c in (0, 1)]
    history = []
    monotone = True
    for it in range(1, max_iter + 1):
        prev = phi.copy()
        for sel in colours:
            s = np.zeros_like(phi)
            s[:, :-1] += ce[:, :-1] * phi[:, 1:]
            s[:, 1:] += cw[:, 1:] * phi[:, :-1]
            s[:-1, :] += cn[:-1, :] * phi[1:, :]
            s[1:, :] += cs[1:, :] * phi[:-1, :]
            phi[sel] = s[sel] / diag[sel]
        step = phi[interior] - prev[interior]
        if step.min() < -1e-14:
            monotone = False
        history.append(float(np.max(np.abs(step))))
        if history[-1] < tol:
            return phi, it, monotone, history
    raise RuntimeError(f"monotone iteration did not converge in {max_iter} sweeps "
                       f"(last step {history[-1]:.3g})")


def build_multiplier(P: PotentialPair, grid: GridSpec | None = None, tol: float = 1e-10,
                     solver: str = "direct", max_iter: int = 200_000) -> Multiplier:
    """Positive solution of ``L* phi = 0`` on B_2 with boundary data ``exp(2 lam)``.

    ``tol`` bounds the sup-norm step between sweeps of the normalized iterate
    (``phi / exp(2 lam)``).  ``solver="direct"`` replaces the sweeps by the exact
    solve of the same linear system.
    """
    if grid is not None and grid != P.grid:
        raise ValueError("potential is sampled on a different grid")
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = P.grid
    lam = P.lam
    interior = interior_mask(g.mask)
    start = np.where(g.mask, np.exp(lam * (g.X - 2.0)), 0.0)
    start[g.mask & ~interior] = 1.0
    if solver == "direct":
        phi_hat = _solve_direct(P, interior, start)
        iterations, monotone, history = 1, bool(np.all(phi_hat[interior] >= start[interior] * (1 - 1e-12))), []
    elif solver == "gauss-seidel":
        phi_hat, iterations, monotone, history = _solve_gauss_seidel(P, interior, start, tol, max_iter)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    res = _apply(phi_hat, *_stencil(P))
    residual = float(np.max(np.abs(res[interior])))
    log.debug("multiplier M=%g K=%g: %d iterations, residual %.3g", P.M, P.K, iterations, residual)
    psi = np.where(g.mask, np.log(np.where(g.mask, phi_hat, 1.0)) + 2 * lam, 0.0)
    return Multiplier.from_psi(ScalarField(g, psi, g.mask), P.M, P.K, residual=residual,
                               iterations=iterations, monotone=monotone, history=history)


def grad_log(m: Multiplier) -> tuple[ScalarField, ScalarField]:
    return gradient(m.psi)


def lipschitz_constant(m: Multiplier, r: float = WORKING_RADIUS, center=(0.0, 0.0)) -> float:
    """Sup of ``|grad psi|`` over ``B_r``; only claimed for ``r <= 7/5``."""
    if r > WORKING_RADIUS + 1e-12:
        raise ValueError(f"gradient estimate only holds on B_7/5, got r={r}")
    return sup_norm(grad_norm(m.psi), center, r)


def morrey_check(m: Multiplier, z, r: float, C: float = 10.0) -> float:
    """Scaled energy ``int_{B_r(z)} |grad psi|^2 / (C^2 (M + K^2) r^2)``."""
    zc = as_complex(z)
    if abs(zc) > WORKING_RADIUS:
        raise ValueError("centre must lie in B_7/5")
    if not (1 / (C * m.lam) < r < 1 / 5):
        raise ValueError(f"radius {r} outside the window (1/(C lam), 1/5)")
    gx, gy = gradient(m.psi)
    energy = ScalarField(gx.grid, gx.filled(0) ** 2 + gy.filled(0) ** 2, gx.mask)
    return integrate(energy, zc, r) / (C**2 * (m.M + m.K**2) * r**2)


def local_bounds(m: Multiplier, zhat, radius: float) -> tuple[float, float]:
    """Min and max of ``phi`` over the nodes of ``B_radius(zhat)``."""
    sel = m.phi.mask & m.grid.disc_mask(as_complex(zhat), radius)
    if not sel.any():
        vals = np.array([interpolate(m.phi, zhat)])
    else:
        vals = m.phi.values[sel]
    return float(vals.min()), float(vals.max())


def normalize_at(m: Multiplier, zhat, c: float = 1.0) -> Multiplier:
    """Scale ``phi`` so ``phi(zhat) = 1`` and check it stays within ``e^(+-c L / lam)``
    on ``B_{c / lam}(zhat)``, ``L`` the Lipschitz constant of ``psi`` there."""
    zc = as_complex(zhat)
    if abs(zc) > WORKING_RADIUS:
        raise ValueError("normalization point must lie in B_7/5")
    if not m.grid.contains(zc):
        raise ValueError("normalization point outside the grid")
    psi_hat = float(interpolate(m.psi, zc))
    psi = ScalarField(m.grid, m.psi.filled(0.0) - psi_hat, m.psi.mask)
    out = Multiplier.from_psi(psi, m.M, m.K, normalization_point=zc, residual=m.residual,
                              iterations=m.iterations, monotone=m.monotone, history=m.history)
    rad = c / m.lam
    L = sup_norm(grad_norm(out.psi), zc, rad + 2 * m.grid.h)
    lo, hi = local_bounds(out, zc, rad)
    bound = np.exp(c * L / m.lam + 2 * L * m.grid.h)
    if hi > bound or lo < 1 / bound:
        raise ValueError(f"normalized multiplier leaves [{1 / bound:.4g}, {bound:.4g}] near zhat")
    return out


def interior_gradient_constant(m: Multiplier, r: float, a1: float = 0.5, a2: float = 1.0,
                               center=(0.0, 0.0)) -> float:
    """Measured ``C`` in ``|grad phi|_{B_{a1 r}} <= C (M + K) |phi|_{B_{a2 r}} / r``."""
    if not 0 < a1 < a2 or a2 * r >= 2:
        raise ValueError("need 0 < a1 < a2 and a2 r < 2")
    g = sup_norm(grad_norm(m.phi), center, a1 * r)
    return g * r / ((m.M + m.K) * sup_norm(m.phi, center, a2 * r))


def alpha(m: Multiplier) -> ComplexField:
    """``dbar log phi``."""
    gx, gy = gradient(m.psi)
    return ComplexField(gx.grid, np.where(gx.mask, 0.5 * (gx.values + 1j * gy.values), 0), gx.mask)


def solve_dirichlet(P: PotentialPair, boundary) -> ScalarField:
    """Solve ``lap u + W . grad u - V u = 0`` on B_2 with ``u = boundary(x, y)`` on the rim.

    This is the operator of the multiplier problem; with ``W = 0`` it is also
    the divergence-form equation.  Used to manufacture test solutions.
    """
    g = P.grid
    interior = interior_mask(g.mask)
    start = np.zeros(g.shape)
    rim = g.mask & ~interior
    start[rim] = boundary(g.X[rim], g.Y[rim])
    u = _solve_direct(P, interior, start)
    return ScalarField(g, np.where(g.mask, u, 0.0), g.mask)
