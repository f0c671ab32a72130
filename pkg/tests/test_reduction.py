import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landis.geometry import CutoffGeometry
from landis.grid import ComplexField, GridSpec, ScalarField, dbar, sup_norm
from landis.multiplier import (
    Multiplier,
    build_multiplier,
    constant_potential,
    lipschitz_constant,
    random_potential,
)
from landis.reduction import (
    G_FLOOR,
    approximate_stream_function,
    assemble_g,
    coefficients,
    divergence_residual,
    drift_reduction,
    dichotomy_threshold,
    gradient_case_analysis,
    gradient_lower_bound,
    modulus_sandwich,
    reduce_coefficient,
    reduce_divergence_form,
    reduce_exterior,
    stream_function,
    stream_loop_defects,
    to_divergence_form,
    vtilde_smallness,
)


def unit_multiplier(grid, value=1.0):
    return Multiplier.from_phi(ScalarField.constant(grid, value))


def test_u_equal_phi_gives_one(grid64):
    m = build_multiplier(random_potential(grid64, 4.0, 1.0, seed=0, with_drift=False))
    v = to_divergence_form(m.phi, m)
    assert np.allclose(v.masked(), 1.0)
    assert divergence_residual(v, m, r=1.5) < 1e-8 * np.exp(2 * m.lam)


def test_constant_multiplier_linear_u(grid64):
    m = unit_multiplier(grid64, np.e**2)
    v = to_divergence_form(ScalarField.sample(grid64, lambda x, y: x), m)
    assert np.allclose(v.masked(), grid64.X[grid64.mask] * np.exp(-2))
    assert divergence_residual(v, m) < 1e-10


def test_divergence_residual_refines():
    out = []
    for n in (64, 128):
        g = GridSpec(radius=2.0, n=n)
        m = build_multiplier(constant_potential(g, 1.0))
        v = to_divergence_form(ScalarField.sample(g, lambda x, y: np.exp(x)), m)
        out.append(divergence_residual(v, m, r=1.4) / np.exp(2 * m.lam))
    assert out[1] < out[0]


def test_stream_function_of_linear(grid64):
    m = unit_multiplier(grid64)
    vt = stream_function(ScalarField.sample(grid64, lambda x, y: x), m)
    assert np.allclose(vt.masked(), grid64.Y[vt.mask], atol=1e-12)


def test_stream_function_of_harmonic_quadratic(grid64):
    m = unit_multiplier(grid64)
    vt = stream_function(ScalarField.sample(grid64, lambda x, y: x**2 - y**2), m)
    exact = 2 * grid64.X * grid64.Y
    assert np.max(np.abs(vt.masked() - exact[vt.mask])) < 1e-10


def test_stream_function_of_constant(grid64):
    vt = stream_function(ScalarField.constant(grid64, 3.0), unit_multiplier(grid64))
    assert np.all(vt.masked() == 0)


def test_stream_base_is_zero(grid64):
    m = build_multiplier(constant_potential(grid64, 1.0))
    v = to_divergence_form(ScalarField.sample(grid64, lambda x, y: np.exp(x)), m)
    vt = stream_function(v, m)
    assert vt.values[grid64.index_of((0, 0))] == 0


def test_loop_defect_halves():
    d = []
    for n in (64, 128):
        g = GridSpec(radius=2.0, n=n)
        m = build_multiplier(constant_potential(g, 1.0))
        v = to_divergence_form(ScalarField.sample(g, lambda x, y: np.exp(x)), m)
        d.append(np.max(stream_loop_defects(v, m)) / np.exp(4 * m.lam))
    assert d[1] <= 0.6 * d[0]


def test_holomorphic_g_for_unit_multiplier(grid64):
    m = unit_multiplier(grid64)
    v = ScalarField.sample(grid64, lambda x, y: x**3 - 3 * x * y**2)
    vt = stream_function(v, m)
    g = assemble_g(v, vt, m)
    a, at = coefficients(m, None, g)
    assert np.all(a.masked() == 0) and np.all(at.masked() == 0)
    d = dbar(g)
    inner = d.mask & (np.abs(grid64.Z) < 1.5)
    assert np.max(np.abs(d.values[inner])) < 10 * grid64.h


def test_alpha_of_exponential_multiplier(grid64):
    M = 4.0
    m = Multiplier.from_psi(ScalarField.sample(grid64, lambda x, y: np.sqrt(M) * x), M, 1.0)
    g = ComplexField.sample(grid64, lambda x, y: np.exp(x) + 1j * y)
    a, at = coefficients(m, None, g)
    assert np.allclose(a.masked(), np.sqrt(M) / 2)
    assert np.max(np.abs(at.masked())) <= np.sqrt(M) + 1e-12


def test_reduced_coefficient_bound_built():
    g = GridSpec(radius=2.0, n=128)
    m = build_multiplier(constant_potential(g, 1.0))
    u = ScalarField.sample(g, lambda x, y: np.exp(x))
    sys_ = reduce_divergence_form(u, m)
    L = lipschitz_constant(m)
    c = sys_.coeff.restrict((0, 0), 7 / 5)
    assert sup_norm(c) <= 2 * L + m.K


def test_zero_branch_of_reduced_coefficient(grid64):
    c = ComplexField.constant(grid64, 1.0 + 1j)
    gv = np.where(grid64.X > 0, 1.0, 1e-20) + 0j
    g = ComplexField(grid64, gv)
    ct = reduce_coefficient(c, g)
    dead = grid64.mask & (grid64.X <= 0)
    assert np.all(ct.values[dead] == 0)
    assert G_FLOOR == 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_reduced_coefficient_at_most_twice(seed):
    g = GridSpec(radius=1.0, n=16)
    rng = np.random.default_rng(seed)
    c = ComplexField(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    gz = ComplexField(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    ct = reduce_coefficient(c, gz)
    assert np.all(np.abs(ct.masked()) <= 2 * np.abs(c.masked()) + 1e-12)


def test_cauchy_riemann_coupling():
    res = []
    for n in (64, 128):
        g = GridSpec(radius=2.0, n=n)
        m = build_multiplier(constant_potential(g, 1.0))
        u = ScalarField.sample(g, lambda x, y: np.exp(x))
        res.append(reduce_divergence_form(u, m).residual / np.exp(2 * m.lam))
    assert res[1] < res[0]


def test_modulus_sandwich_and_smallness():
    g = GridSpec(radius=2.0, n=128)
    m = build_multiplier(random_potential(g, 4.0, 1.0, seed=2, with_drift=False))
    u = ScalarField.sample(g, lambda x, y: 1 + x * y)
    sys_ = reduce_divergence_form(u, m)
    assert modulus_sandwich(sys_.g, u, m, sys_.vtilde) < 1e-12
    ratios = vtilde_smallness(sys_.vtilde, sys_.v, m, [4 * g.h, 0.25, 0.5, 1.0])
    assert np.all(ratios <= np.sqrt(2) + 1e-9)


def test_drift_reduction_linear(grid64):
    m = unit_multiplier(grid64)
    G, Wt, res = drift_reduction(ScalarField.sample(grid64, lambda x, y: x), m)
    assert np.allclose(G.masked(), 0.5)
    assert np.max(np.abs(Wt.masked())) == 0 and res == 0


def test_drift_reduction_harmonic_quadratic(grid64):
    m = unit_multiplier(grid64)
    G, Wt, res = drift_reduction(ScalarField.sample(grid64, lambda x, y: x**2 - y**2), m)
    assert np.allclose(G.masked(), grid64.Z[G.mask])
    assert res < 1e-12


def test_drift_reduction_refines():
    res = []
    for n in (64, 128):
        g = GridSpec(radius=2.0, n=n)
        P = constant_potential(g, 1.0, K=1.0, drift=(1.0, 0.0))
        m = build_multiplier(P)
        # e^{x phi_0}: lap u + u_x - 2u = 0 with the root of k^2 + k - 2
        V2 = constant_potential(g, 2.0, K=1.0, drift=(1.0, 0.0))
        u = ScalarField.sample(g, lambda x, y: np.exp(x))
        v = to_divergence_form(u, m)
        G, Wt, r = drift_reduction(v, m, V2.W)
        res.append(r / sup_norm(G))
    assert res[1] < res[0]


def test_dichotomy_constants():
    assert dichotomy_threshold(1, 1) == pytest.approx(1.6773e-4, rel=1e-4)
    assert dichotomy_threshold(1, 1) == 0.5 * np.exp(-8)
    assert gradient_lower_bound(1, 1) == 0.5 * np.exp(-4)
    assert gradient_lower_bound(1, 1) == pytest.approx(9.1578e-3, rel=1e-4)


def test_case_analysis_positive_branch(grid64):
    m = build_multiplier(constant_potential(grid64, 1.0))
    out = gradient_case_analysis(ScalarField.constant(grid64, 1.0), m)
    assert out.branch == "positive"


def test_case_analysis_gradient_branch(grid64):
    m = unit_multiplier(grid64)
    out = gradient_case_analysis(ScalarField.sample(grid64, lambda x, y: x), m)
    assert out.branch == "gradient"
    assert out.measured_gradient == pytest.approx(1.0)
    assert out.measured_gradient >= out.gradient_bound


def test_case_analysis_hypothesis(grid64):
    m = unit_multiplier(grid64)
    with pytest.raises(ValueError):
        gradient_case_analysis(ScalarField.constant(grid64, 0.5), m)


def test_approximate_stream_constant():
    g = GridSpec(radius=2.0, n=128)
    geom = CutoffGeometry(2.0, 10.0)
    vt, a = approximate_stream_function(ScalarField.constant(g, 2.0), unit_multiplier(g), geom)
    assert np.all(vt.masked() == 0)
    assert a >= geom.a


def test_exterior_reduction_identities():
    A, R = 2.0, 10.0
    s = A * R
    geom = CutoffGeometry(A, R)
    rel = []
    for n in (128, 256):
        g = GridSpec(radius=2.0, n=n)
        m = build_multiplier(constant_potential(g, s**2))
        u = ScalarField.sample(g, lambda x, y: np.exp(-s * (x + 0.5)))
        sys_, diag = reduce_exterior(u, m, geom)
        assert diag["correction_outside_strip"] == 0
        assert np.isfinite(sys_.residual)
        rel.append(diag["dx_residual"] / diag["scale"])
    assert rel[1] < 0.6 * rel[0]
