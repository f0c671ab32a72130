import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landis.grid import GridSpec, ScalarField
from landis.scaling import (
    EntireSample,
    exponential_sample,
    harmonic_sample,
    inf_sup_measure,
    inf_sup_stable,
    landis_bound,
    landis_curve,
    log_landis_bound,
    rescale,
    rotate,
    sample_grid,
)


def constant_sample(R):
    g = sample_grid(R, 256)
    one = lambda x, y: np.ones_like(np.asarray(x, float))  # noqa: E731
    return EntireSample(ScalarField.constant(g, 1.0), ScalarField.constant(g, 0.0), None, 0.0,
                        one, lambda x, y: 0 * np.asarray(x, float), None, "one")


def test_sample_grid_hits_integers():
    g = sample_grid(10, 512)
    assert g.index_of((9.0, 0.0)) is not None
    assert g.radius >= 12


def test_sample_rejects_growth_and_normalization():
    g = sample_grid(4, 128)
    with pytest.raises(ValueError):
        EntireSample(ScalarField.sample(g, lambda x, y: np.exp(2 * x)), ScalarField.constant(g, 1.0),
                     None, 1.0)
    with pytest.raises(ValueError):
        EntireSample(ScalarField.constant(g, 0.5), ScalarField.constant(g, 0.0), None, 1.0)


def test_rescale_amplifies_potential():
    s = exponential_sample(10, n_max=256)
    local = rescale(s, (10.0, 0.0), A=1.0)
    assert local.P.M == pytest.approx(100.0)
    assert local.P.V.masked().max() == pytest.approx(100.0)


@pytest.mark.parametrize("A,R", [(1.0, 4.0), (2.0, 5.0), (2.0, 8.0), (3.0, 6.0)])
def test_rescale_origin_value(A, R):
    s = exponential_sample(R, n_max=256)
    local = rescale(s, (R, 0.0), A=A, grid=GridSpec(n=240))
    assert local.zhat == pytest.approx(-1 / A)
    u = local.u
    assert u(local.zhat) == pytest.approx(1.0, abs=1e-12)


def test_rescale_image_point():
    s = harmonic_sample(6, n_max=256)
    local = rescale(s, (6.0, 0.0), A=2.0)
    assert local.zhat == -0.5


def test_rescale_preconditions():
    s = exponential_sample(4, n_max=128)
    with pytest.raises(ValueError):
        rescale(s, (3.0, 0.0))
    with pytest.raises(ValueError):
        rescale(s, (4.0, 0.0), A=0.5)


def test_rescale_grid_too_small():
    g = sample_grid(4, 128)
    s = EntireSample(ScalarField.sample(g, lambda x, y: np.exp(-x)), ScalarField.constant(g, 1.0), None, 1.0)
    with pytest.raises(ValueError, match="too small"):
        rescale(s, (4.0, 0.0), A=2.0)


def test_landis_bound_examples():
    assert log_landis_bound(100, 100) == pytest.approx(-100 * np.log(100))
    assert landis_bound(0, 50) == 1.0
    # e^{-R+1} beats R^{-R} for every R >= 3
    for R in (3, 5, 10, 40):
        assert -R + 1 >= log_landis_bound(R, R)


@settings(max_examples=50, deadline=None)
@given(E=st.floats(0, 1e3), dE=st.floats(0, 10), R=st.floats(1, 1e3), dR=st.floats(0, 100))
def test_landis_bound_monotone(E, dE, R, dR):
    b = log_landis_bound(E, R)
    assert log_landis_bound(E + dE, R) <= b
    assert log_landis_bound(E, R + dR) <= b


def test_inf_sup_examples():
    assert inf_sup_measure(constant_sample(6), 6) == 1.0
    s = exponential_sample(5, n_max=256)
    assert inf_sup_measure(s, 5) == pytest.approx(np.exp(-4), rel=1e-12)


def test_inf_sup_harmonic_above_landis():
    R = 8
    s = harmonic_sample(R, degree=3, n_max=256)
    val = inf_sup_measure(s, R)
    assert val > 0
    assert np.log(val) >= log_landis_bound(R, R)


def test_inf_sup_needs_angles():
    with pytest.raises(ValueError):
        inf_sup_measure(constant_sample(4), 4, n_angles=4)


@settings(max_examples=8, deadline=None)
@given(angle=st.floats(0, 2 * np.pi))
def test_inf_sup_rotation_invariant(angle):
    s = exponential_sample(6, n_max=256)
    base = inf_sup_measure(s, 6)
    rot = inf_sup_measure(rotate(s, angle), 6)
    # angular discretization and the lattice distort unit discs by O(h)
    assert rot == pytest.approx(base, rel=0.2)


def test_inf_sup_stable():
    assert inf_sup_stable(exponential_sample(8, n_max=256), 8)


@pytest.mark.slow
def test_landis_curve_harmonic_pipeline():
    curve = landis_curve(lambda R: harmonic_sample(R, degree=2, n_max=256), [4, 8], n_local=128)
    for p in curve.points:
        assert p.sound
        assert p.source == "pipeline"


@pytest.mark.slow
def test_landis_curve_exponential():
    curve = landis_curve(lambda R: exponential_sample(R, n_max=512), [4, 8])
    for p in curve.points:
        assert p.measured == pytest.approx(np.exp(-p.R + 1), rel=0.05)
        assert p.sound and p.stable
    assert curve.points[0].source == "pipeline"
