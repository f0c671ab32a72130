"""Geometry of the rescaled exterior problem and its smooth cutoffs.

After rotating the far point onto the positive x-axis, moving the origin next to
the hole and rescaling by ``A R``, the hole becomes ``B_{1/(AR)}(z1)`` and the
original origin lands at ``zhat = -1/A``.  ``chi`` switches the hole off, ``zeta``
localizes to ``1/(4AR) < |z| < 6/5``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, ScalarField

WORKING_RADIUS = 7 / 5


def smoothstep(t):
    """Quintic 0 -> 1 on [0, 1] with vanishing first and second derivatives at both ends."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t * t)


def smoothstep_prime(t):
    inside = (t > 0) & (t < 1)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30 * t * t * (1 - t) ** 2, 0.0)


SMOOTHSTEP_MAX_SLOPE = 15 / 8


@dataclass(frozen=True)
class CutoffGeometry:
    A: float
    R: float

    def __post_init__(self):
        if self.A <= 0 or self.R <= 0:
            raise ValueError("A and R must be positive")
        s = self.scale
        if abs(self.z1) + 1 / s > WORKING_RADIUS:
            raise ValueError("hole B_{1/(AR)}(z1) is not inside B_7/5")
        if not (abs(self.zhat) - 1 / s > 1 / (2 * s) and abs(self.zhat) + 1 / s < 1):
            raise ValueError("ball B_{1/(AR)}(zhat) is not inside the annulus Z")
        # chi's transition annulus must stay clear of zhat's ball
        if abs(self.zhat - self.z1) - 9 / (8 * s) < 1 / s:
            raise ValueError("cutoff annulus G meets B_{1/(AR)}(zhat)")

    @property
    def scale(self) -> float:
        return self.A * self.R

    @property
    def z0(self) -> complex:
        return complex(self.R, 0.0)

    @property
    def z1(self) -> complex:
        return complex(-(1 / self.A + 5 / (2 * self.scale)), 0.0)

    @property
    def zhat(self) -> complex:
        return complex(-1 / self.A, 0.0)

    @property
    def a(self) -> float:
        return -1 / self.A - 11 / (8 * self.scale)

    @property
    def hole_radius(self) -> float:
        return 1 / self.scale

    # radii of the annuli
    @property
    def chi_inner(self) -> float:
        return 17 / (16 * self.scale)

    @property
    def chi_outer(self) -> float:
        return 9 / (8 * self.scale)

    def regions(self, z) -> dict[str, np.ndarray]:
        s = self.scale
        r = np.abs(z)
        rz1 = np.abs(z - self.z1)
        return {
            "X": (r > 1 / (4 * s)) & (r < 1 / (2 * s)),
            "Y": (r > 1) & (r < 6 / 5),
            "Z": (r > 1 / (2 * s)) & (r < 1),
            "Ztilde": (r > 1 / (4 * s)) & (r < 6 / 5),
            "G": (rz1 >= self.chi_inner) & (rz1 <= self.chi_outer),
        }

    def h2_strip(self, z) -> np.ndarray:
        """Region containing the support of the path-correction term."""
        return (z.real > -6 / 5) & (z.real < self.a) & (np.abs(z.imag) < self.chi_outer)

    # cutoffs, evaluated on complex points
    def chi(self, z):
        t = (np.abs(z - self.z1) - self.chi_inner) / (self.chi_outer - self.chi_inner)
        return smoothstep(t)

    def chi_gradient(self, z):
        d = z - self.z1
        r = np.abs(d)
        width = self.chi_outer - self.chi_inner
        s = smoothstep_prime((r - self.chi_inner) / width) / width
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r > 0, d / np.where(r > 0, r, 1), 0)
        return s * unit.real, s * unit.imag

    def dbar_chi(self, z):
        gx, gy = self.chi_gradient(z)
        return 0.5 * (gx + 1j * gy)

    def zeta(self, z):
        s = self.scale
        r = np.abs(z)
        rise = smoothstep((r - 1 / (4 * s)) / (1 / (4 * s)))
        fall = 1 - smoothstep((r - 1) / (1 / 5))
        return rise * fall

    def zeta_gradient_bounds(self) -> tuple[float, float]:
        """Sup of ``|grad zeta|`` on X and on Y."""
        return SMOOTHSTEP_MAX_SLOPE * 4 * self.scale, SMOOTHSTEP_MAX_SLOPE * 5

    def chi_field(self, grid: GridSpec) -> ScalarField:
        return ScalarField(grid, self.chi(grid.Z), grid.mask)

    def zeta_field(self, grid: GridSpec) -> ScalarField:
        return ScalarField(grid, self.zeta(grid.Z), grid.mask)
