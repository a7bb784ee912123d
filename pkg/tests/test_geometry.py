import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mirrorfree.geometry import (
    DEFAULT_CONTEXT as CTX, GeometryContext, GeometryError, TrianglePath, anti_lipschitz_ratio,
    box_sampler, calibrate_constants, co_conservativeness_estimate, conservativeness_estimate, d_theta,
    gbd, line_integral, loop_integral, loop_integrals, monotone_certificate, norelip_triangle,
    rel_smooth_certificate, rel_strong_mono_certificate, relative_lipschitz_slack, relopsmooth_slack,
    segments_integral, three_point_residual,
)
from mirrorfree.operators import (
    MinMaxSplit, bilinear_field, cubic_block_field, d4_gradient_field, identity_field, linear_field,
    rotation_field,
)
from mirrorfree.problems import norelip_closed_form, norelip_pair

pts = arrays(float, 2, elements=st.floats(-2, 2, allow_nan=False))


def test_quadrature_rule_on_unit_interval():
    ctx = GeometryContext(5)
    assert np.isclose(ctx.weights.sum(), 1.0)
    assert np.all((ctx.nodes > 0) & (ctx.nodes < 1))
    # exact for t^9 with 5 nodes
    assert np.isclose(ctx.weights @ ctx.nodes ** 9, 0.1)
    with pytest.raises(GeometryError):
        GeometryContext(0)


def test_identity_gbd_is_half_squared_distance():
    I = identity_field(2)
    assert np.isclose(gbd(CTX, I, [3.0, 4.0], [0.0, 0.0]), 12.5)


def test_quartic_gbd_closed_form():
    # H = ||h||^2 h is the gradient of ||h||^4 / 4
    H = d4_gradient_field(2)
    a, b = np.array([1.0, -0.5]), np.array([0.3, 2.0])
    want = 0.25 * (a @ a) ** 2 - 0.25 * (b @ b) ** 2 - (b @ b) * b @ (a - b)
    assert np.isclose(gbd(CTX, H, a, b), want, rtol=1e-13)


def test_rotation_loop_is_twice_signed_area():
    # loop of (y, -x) is -2 * signed area
    tri = TrianglePath(np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert np.isclose(loop_integral(CTX, rotation_field(), tri), -2 * tri.signed_area_2d())


def test_line_integral_linear_field(rng):
    M = rng.standard_normal((3, 3))
    F = linear_field(M)
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    want = (M @ (0.5 * (a + b))) @ (b - a)
    assert np.isclose(line_integral(CTX, F, a, b), want)
    np.testing.assert_allclose(segments_integral(CTX, F, np.stack([a, b]), np.stack([b, a])),
                               [want, -want])


@given(pts, pts, pts)
def test_three_point_identity_for_nonconservative_field(a, b, c):
    F = bilinear_field([[1.0]])
    G = cubic_block_field(MinMaxSplit(1, 1), 1.0, 0.5)
    for f in (F, G):
        assert three_point_residual(CTX, f, a, b, c) <= 1e-10 * (1 + np.abs(np.concatenate([a, b, c])).max() ** 4)


@given(pts, pts)
def test_gbd_of_monotone_field_nonnegative(a, b):
    F = cubic_block_field(MinMaxSplit(1, 1), 1.0, 0.0)
    assert gbd(CTX, F, a, b) >= -1e-12
    R = rotation_field()
    assert gbd(CTX, R, a, b) >= -1e-12


@given(pts, pts, pts)
def test_loop_orientation_flips_sign(a, b, c):
    F = bilinear_field([[2.0]])
    s = loop_integral(CTX, F, TrianglePath(a, b, c)) + loop_integral(CTX, F, TrianglePath(a, c, b))
    assert abs(s) <= 1e-12


def test_conservativeness_estimates():
    sampler = box_sampler(2, seed=0)
    assert conservativeness_estimate(CTX, d4_gradient_field(2), sampler, 50) <= 1e-12
    assert conservativeness_estimate(CTX, rotation_field(), sampler, 50) > 0.1
    R = rotation_field()
    assert co_conservativeness_estimate(CTX, R, R, sampler, 20) == 0.0
    with pytest.raises(GeometryError):
        conservativeness_estimate(CTX, R, sampler, 0)


def test_loop_integrals_batch_matches_single(rng):
    F = cubic_block_field(MinMaxSplit(1, 2), 1.0, 0.0)
    A, B, C = (rng.standard_normal((4, 3)) for _ in range(3))
    got = loop_integrals(CTX, bilinear_field(np.ones((1, 2))), A, B, C)
    want = [loop_integral(CTX, bilinear_field(np.ones((1, 2))), TrianglePath(a, b, c))
            for a, b, c in zip(A, B, C)]
    np.testing.assert_allclose(got, want, atol=1e-13)
    assert np.all(np.abs(loop_integrals(CTX, F, A, B, C)) < 1e-10)


def test_certificates_and_calibration():
    F = cubic_block_field(MinMaxSplit(1, 1), 2.0, 1.0)
    H = cubic_block_field(MinMaxSplit(1, 1), 1.0, 1.0)
    s = box_sampler(2, seed=0)
    # 1 * dH <= dF <= 2 * dH
    assert rel_smooth_certificate(F, H, 2.0, s).holds
    assert rel_strong_mono_certificate(F, H, 1.0, s).holds
    bad = rel_smooth_certificate(F, H, 1.5, s)
    assert not bad.holds and bad.worst_margin < 0
    assert bad.as_dict()["samples"] == 200
    L, m = calibrate_constants(F, H, box_sampler(2, seed=1), 100)
    assert 1.0 <= m <= L <= 2.0 * (1 + 1e-6)
    assert monotone_certificate(rotation_field(), s).holds
    with pytest.raises(GeometryError):
        rel_smooth_certificate(F, H, -1.0, s)


def test_relative_slacks_on_linear_pair(rng):
    # F = H = identity with L = 1: relative Lipschitz slack equals 0.5 ||a - 2b + c||^2 >= 0
    I = identity_field(2)
    a, b, c = rng.standard_normal((3, 2))
    assert relative_lipschitz_slack(CTX, I, I, 1.0, a, b, c) >= -1e-12
    assert abs(relopsmooth_slack(CTX, I, I, 1.0, a, b, c)
               - relative_lipschitz_slack(CTX, I, I, 1.0, a, b, c)) < 1e-12


@pytest.mark.parametrize("theta", [1.0, 0.1, 0.01])
@pytest.mark.parametrize("scaling", ["game", "smooth"])
def test_anti_lipschitz_closed_form(theta, scaling):
    F, H = norelip_pair(1.3, 0.7, scaling)
    r = anti_lipschitz_ratio(CTX, F, H, norelip_triangle(theta))
    d = norelip_closed_form(1.3, 0.7, theta, scaling)
    assert abs(r - d) <= 1e-10 * max(1.0, abs(d))


def test_d_theta_values_and_divergence():
    assert d_theta(1, 1, 1.0) == 0.0
    assert np.isclose(d_theta(1, 1, 0.1), 79.2)
    assert np.isclose(d_theta(1, 1, 0.01), 7999.2)
    assert all(d_theta(0.0, 1.0, t) <= 0 for t in (1, 0.1, 0.01))
    assert 3.9 <= d_theta(1, 1, 5e-4) / d_theta(1, 1, 1e-3) <= 4.1
    with pytest.raises(GeometryError):
        d_theta(1, 1, 0.0)


def test_degenerate_triangle_rejected():
    F, H = norelip_pair(1.0, 1.0)
    z = np.zeros(2)
    with pytest.raises(GeometryError):
        anti_lipschitz_ratio(CTX, F, H, TrianglePath(z, z, z))
