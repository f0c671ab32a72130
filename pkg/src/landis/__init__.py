"""Numerical companion for quantitative unique continuation in the plane.

Grid fields and operators, the positive multiplier, d-bar tools, the
reduction to a Vekua-type system, three-circle order certificates, rescaling
to decay bounds and the exterior Carleman budget.
"""

from .grid import ComplexField, Field, GridSpec, ScalarField
from .multiplier import Multiplier, PotentialPair, build_multiplier
from .order import ThreeCircleCertificate, theta, vanishing_order_bound

__all__ = [
    "ComplexField", "Field", "GridSpec", "ScalarField",
    "Multiplier", "PotentialPair", "build_multiplier",
    "ThreeCircleCertificate", "theta", "vanishing_order_bound",
]
__version__ = "0.1.0"
