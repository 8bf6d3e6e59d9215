"""Geometry layer: quadrature exactness, weight profiles, spindle grid."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conelab import geometry as geo

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# torus quadrature and calculus


def test_flat_volume_frozen():
    t1 = geo.make_torus(1, 32)
    assert t1.V == pytest.approx(2.0 * TWO_PI ** 2, rel=1e-14)
    t1s = geo.make_torus(1, 32, scale=0.4)
    assert t1s.V == pytest.approx(0.8 * TWO_PI ** 2, rel=1e-14)
    t2 = geo.make_torus(2, 16)
    assert t2.V == pytest.approx(8.0 * TWO_PI ** 4, rel=1e-14)


def test_quadrature_kills_fourier_modes():
    t = geo.make_torus(1, 32)
    x = np.real(t.z[0])
    y = np.imag(t.z[0])
    for field in (np.cos(3 * x), np.sin(2 * y), np.cos(x + 5 * y)):
        assert abs(t.integral0(field)) <= 1e-12 * t.V
    assert t.integral0(np.ones_like(x)) == pytest.approx(t.V, rel=1e-14)


def test_hessian_analytic():
    t = geo.make_torus(1, 32)
    x = np.real(t.z[0])
    phi = np.cos(x)
    h = t.hessian(phi)
    # d/dz d/dzbar = Laplacian/4
    assert np.max(np.abs(h[0, 0] - (-np.cos(x) / 4.0))) < 1e-12


def test_hessian_dim2_analytic():
    t = geo.make_torus(2, 16)
    x1 = np.real(t.z[0])
    y2 = np.imag(t.z[1])
    phi = np.cos(x1) * np.sin(y2)
    h = t.hessian(phi)
    assert np.max(np.abs(h[0, 0] + np.cos(x1) * np.sin(y2) / 4.0)) < 1e-12
    assert np.max(np.abs(h[1, 1] + np.cos(x1) * np.sin(y2) / 4.0)) < 1e-12
    # d/dz1 = (dx1 - i dy1)/2 gives -sin(x1)/2; d/dzbar2 = (dx2 + i dy2)/2
    # gives (i/2) cos(y2)
    ref = (-np.sin(x1) / 2.0) * (1j * np.cos(y2) / 2.0)
    assert np.max(np.abs(h[0, 1] - ref)) < 1e-12


def test_positivity_failure_names_point():
    with pytest.raises(ValueError, match="grid index"):
        geo.make_torus(1, 32, background_perturbation=("band", 10.0, 2, 7))


def test_resolution_validation():
    with pytest.raises(ValueError, match="power of two"):
        geo.make_torus(1, 48)
    with pytest.raises(ValueError, match="power of two"):
        geo.make_torus(1, 8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_spectral_derivative_integrates_to_zero(seed):
    t = geo.make_torus(1, 32)
    f = geo.random_band_field(32, 2, 1.0, 5, seed)
    assert abs(t.integral_dxdy(np.real(t.wirt(f, 0)))) <= 1e-10


# ---------------------------------------------------------------------------
# divisor weights


def _slope(w, radii, z0, profile):
    vals = [float(np.mean(profile(z0 + r * np.exp(2j * np.pi * np.arange(8) / 8),
                                  z0))) for r in radii]
    lr = np.log(radii)
    lv = np.log(vals)
    return np.polyfit(lr, lv, 1)[0]


def test_theta_profile_vanishing_order():
    z0 = 1.1 + 0.9j
    radii = np.geomspace(1e-3, 1e-1, 9)
    s = _slope(None, radii, z0, geo.theta_profile)
    assert abs(s - 2.0) < 0.05


def test_cos_profile_vanishing_order():
    z0 = 2.0 + 1.5j
    radii = np.geomspace(1e-3, 1e-1, 9)
    s = _slope(None, radii, z0, geo.cos_profile)
    assert abs(s - 2.0) < 0.05


def test_theta_calibration_ratio():
    z0 = 1.1 + 0.9j
    for ang in (0.0, 1.0, 2.5):
        z = z0 + 1e-5 * np.exp(1j * ang)
        ratio = geo.theta_profile(z, z0) / 1e-10
        assert abs(ratio - 1.0) < 1e-8


def test_cos_calibration_ratio():
    z0 = 0.7 + 2.2j
    z = z0 + 1e-5
    assert abs(geo.cos_profile(z, z0) / 1e-10 - 1.0) < 1e-8


def test_theta_exact_periodicity():
    z0 = 1.3 + 2.1j
    z = np.array([0.2 + 0.5j, 3.0 + 4.0j])
    base = geo.theta_profile(z, z0)
    assert np.allclose(geo.theta_profile(z + TWO_PI, z0), base, rtol=1e-12)
    assert np.allclose(geo.theta_profile(z + TWO_PI * 1j, z0), base, rtol=1e-12)


def test_weight_positive_off_locus():
    t = geo.make_torus(1, 32)
    w = geo.make_weight(t, [math.pi + 1j * math.pi])
    field = w.field
    d = t.nearest_image_dist(t.z[0], math.pi + 1j * math.pi)
    assert np.all(field[d > 1e-8] > 0)


def test_two_point_product_slope():
    t = geo.make_torus(1, 32)
    p1, p2 = 1.0 + 1.0j, 4.0 + 2.0j
    w = geo.make_weight(t, [p1, p2])
    radii = np.geomspace(1e-3, 1e-1, 7)
    for p in (p1, p2):
        vals = [float(np.mean(w.evaluate(p + r * np.exp(2j * np.pi *
                                                        np.arange(8) / 8))))
                for r in radii]
        s = np.polyfit(np.log(radii), np.log(vals), 1)[0]
        assert abs(s - 2.0) < 0.05
    lo, hi = w.factor_bounds
    assert 0 < lo <= hi < np.inf


def test_coincident_loci_rejected():
    t = geo.make_torus(1, 32)
    with pytest.raises(ValueError, match="coincident"):
        geo.make_weight(t, [1 + 1j, 1 + 1j])


def test_weight_curvature_default_zero():
    t = geo.make_torus(1, 32)
    w = geo.make_weight(t, [math.pi + 1j * math.pi])
    out = geo.weight_curvature(t, w, (0, 0))
    assert out.shape == (1, 1)
    assert np.all(out == 0)


def test_weight_curvature_prescribed_factor():
    t = geo.make_torus(1, 64)
    x = np.real(t.z[0])
    y = np.imag(t.z[0])
    rho = 0.3 * np.cos(x) * np.cos(2 * y)
    w = geo.make_weight(t, [math.pi / 2 + 1j * math.pi / 2], rho_spec=rho)
    p = (48, 48)
    out = geo.weight_curvature(t, w, p)
    # -ddbar rho = +(1/4)(k1^2+k2^2) rho for a product mode
    expect = (1.0 + 4.0) / 4.0 * rho[p]
    assert abs(out[0, 0] - expect) < 1e-8


def test_weight_curvature_proximity_error():
    t = geo.make_torus(1, 32)
    z0 = t.z[0][(8, 8)]
    w = geo.make_weight(t, [z0])
    with pytest.raises(ValueError, match="close to the locus"):
        geo.weight_curvature(t, w, (8, 9))


def test_torus2_curve_weight():
    t = geo.make_torus(2, 16)
    w = geo.make_weight(t, [(0, math.pi + 1j * math.pi)])
    assert w.field.shape == t.shape
    # constant along the divisor curve directions z2
    assert np.max(np.abs(w.field[5, 5, :, :] - w.field[5, 5, 0, 0])) < 1e-14


# ---------------------------------------------------------------------------
# cone reference


def test_cone_reference_frozen_value():
    t = geo.make_torus(1, 64)
    z0 = math.pi + 1j * math.pi
    geo.make_weight(t, [z0])
    ref = geo.cone_reference(t, (0.5,))
    # grid point at distance ~0.1 along x from the locus
    target = z0 + 0.1
    idx = (int(round(target.real / t.spacing)), int(round(target.imag / t.spacing)))
    d = float(t.nearest_image_dist(np.array(t.z[0][idx]), z0))
    g = ref.tensor_at(idx)
    assert g[0, 0] == pytest.approx(1.0 + 0.25 * d ** (-1.0), rel=1e-12)


def test_cone_reference_locus_error():
    t = geo.make_torus(1, 32)
    z0 = t.z[0][(8, 8)]
    geo.make_weight(t, [z0])
    ref = geo.cone_reference(t, (0.5,))
    with pytest.raises(ValueError, match="locus"):
        ref.tensor_at((8, 8))


# ---------------------------------------------------------------------------
# spindle


def test_spindle_volume():
    sp = geo.make_spindle(0.5, 1024)
    assert sp.V == pytest.approx(4.0 * math.pi, rel=1e-10)


def test_spindle_beta_validation():
    with pytest.raises(ValueError, match="beta"):
        geo.make_spindle(1.0, 256)
    with pytest.raises(ValueError, match="beta"):
        geo.make_spindle(0.0, 256)


def test_spindle_derivative_accuracy():
    sp = geo.make_spindle(0.5, 1024)
    f = np.exp(-sp.s ** 2 / 8.0)
    d2 = sp.D2 @ f
    exact = (sp.s ** 2 / 16.0 - 0.25) * f
    assert np.max(np.abs(d2 - exact)) < 1e-8
    d1 = sp.D1 @ f
    assert np.max(np.abs(d1 - (-sp.s / 4.0) * f)) < 2e-8


def test_spindle_weights_partition():
    sp = geo.make_spindle(0.5, 512)
    w1, w2 = sp.weights
    assert np.max(np.abs(w1 + w2 - 1.0)) < 1e-14
    # sigma(2s) sigma(-2s) = 1/(4 cosh^2 s) = m/8
    assert np.max(np.abs(w1 * w2 - sp.m / 8.0)) < 1e-14


def test_spindle_closed_form_curvature():
    sp = geo.make_spindle(0.5, 1024)
    phi = sp.closed_form_potential()
    K, mask = sp.gauss_curvature(phi)
    assert np.max(np.abs(K[mask] - sp.beta)) < 1e-5


def test_spindle_closed_form_curvature_other_beta():
    sp = geo.make_spindle(0.7, 1024)
    phi = sp.closed_form_potential()
    K, mask = sp.gauss_curvature(phi)
    assert np.max(np.abs(K[mask] - 0.7)) < 1e-5
