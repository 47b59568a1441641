import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ghostcam.errors import ConfigurationError, DomainError
from ghostcam.spdc import (
    JointGaussian,
    PlaneConfig,
    SpdcParams,
    correlation_length_far_field,
    correlation_length_image_plane,
    derive_joint_gaussian,
    epr_variance_product,
    sample_pair,
    sample_pairs,
    sample_pairs_in_window,
    sinc_phase_matching_width,
    window_probability,
)

SIGMA_P = 7.21e-4


def test_image_plane_length_default():
    assert correlation_length_image_plane(3e-3, 355e-9, 3) == pytest.approx(1.86e-5, rel=5e-3)


def test_image_plane_length_scales_with_magnification():
    m3 = correlation_length_image_plane(3e-3, 355e-9, 3)
    m1 = correlation_length_image_plane(3e-3, 355e-9, 1)
    assert m1 == pytest.approx(6.21e-6, rel=5e-3)
    assert m1 == pytest.approx(m3 / 3, rel=1e-12)


def test_image_plane_length_vanishes_with_crystal():
    assert correlation_length_image_plane(1e-15, 355e-9, 3) < 1e-10
    with pytest.raises(DomainError):
        correlation_length_image_plane(0.0, 355e-9, 3)
    with pytest.raises(DomainError):
        correlation_length_image_plane(3e-3, 355e-9, -1)


def test_far_field_length_default():
    assert correlation_length_far_field(0.300, SIGMA_P, 710e-9) == pytest.approx(3.32e-5, rel=5e-3)


def test_far_field_length_inverse_in_pump_size():
    one = correlation_length_far_field(0.300, SIGMA_P, 710e-9)
    two = correlation_length_far_field(0.300, 2 * SIGMA_P, 710e-9)
    assert two == pytest.approx(1.66e-5, rel=5e-3)
    assert two == pytest.approx(one / 2, rel=1e-12)
    assert correlation_length_far_field(1e-12, SIGMA_P, 710e-9) < 1e-12
    with pytest.raises(DomainError):
        correlation_length_far_field(0.0, SIGMA_P, 710e-9)


def test_pump_sigma_convention():
    # amplitude stdev of a Gaussian with 1.2 mm intensity FWHM
    p = SpdcParams()
    x = np.linspace(-3e-3, 3e-3, 200001)
    intensity = np.exp(-x ** 2 / p.pump_sigma_amplitude ** 2)
    above = x[intensity >= 0.5]
    assert above[-1] - above[0] == pytest.approx(1.2e-3, rel=1e-4)
    assert p.pump_sigma_amplitude == pytest.approx(SIGMA_P, rel=1e-3)


def test_spdc_params_validation():
    with pytest.raises(ConfigurationError):
        SpdcParams(crystal_length=0.0)
    with pytest.raises(ConfigurationError):
        SpdcParams(lambda_down=800e-9)
    SpdcParams(lambda_down=800e-9, degenerate=False)


def test_derive_joint_gaussian_defaults():
    pos = derive_joint_gaussian(SpdcParams(), PlaneConfig.POSITION)
    assert (pos.gamma_marginal, pos.corr_sign) == (1.83e-3, 1)
    assert pos.sigma_cond == pytest.approx(1.86e-5, rel=5e-3)
    mom = derive_joint_gaussian(SpdcParams(), "momentum")
    assert (mom.gamma_marginal, mom.corr_sign) == (3.06e-3, -1)
    assert mom.sigma_cond == pytest.approx(3.32e-5, rel=5e-3)


def test_derive_joint_gaussian_rejects_degenerate_override():
    with pytest.raises(ConfigurationError):
        derive_joint_gaussian(SpdcParams(), "position", gamma_marginal=1e-4, sigma_cond=1e-4)
    with pytest.raises(ConfigurationError):
        PlaneConfig.parse("sideways")


@pytest.mark.parametrize("sign", [1, -1])
def test_perfect_correlation_limit(rng, sign):
    state = JointGaussian(1e-3, 0.0, sign)
    obj, cam, t = sample_pairs(state, rng, 1000, frame_exposure=2.0)
    np.testing.assert_array_equal(obj, sign * cam)
    assert t.min() >= 0 and t.max() < 2.0
    one = sample_pair(state, rng)
    np.testing.assert_array_equal(one.rho_obj, sign * one.rho_cam)


@pytest.mark.parametrize("plane", ["position", "momentum"])
def test_sampler_statistics(plane):
    state = derive_joint_gaussian(SpdcParams(), plane)
    obj, cam, _ = sample_pairs(state, np.random.default_rng(7), 100_000)
    diff = obj - state.corr_sign * cam
    for axis in range(2):
        assert cam[:, axis].std() == pytest.approx(state.gamma_marginal, rel=0.02)
        assert diff[:, axis].std() == pytest.approx(state.sigma_cond, rel=0.02)
        r = np.corrcoef(obj[:, axis], cam[:, axis])[0, 1]
        assert np.sign(r) == state.corr_sign and abs(r) > 0.999


def test_position_difference_width():
    state = derive_joint_gaussian(SpdcParams(), "position")
    obj, cam, _ = sample_pairs(state, np.random.default_rng(8), 100_000)
    assert (obj - cam)[:, 0].std() == pytest.approx(1.86e-5, rel=0.02)


def test_window_sampler_matches_rejection(rng):
    # conditioning on the object window must give the same law as rejection sampling
    state = JointGaussian(1e-3, 2e-4, -1)
    lo, hi = np.array([-5e-4, 0.0]), np.array([1e-3, 2e-3])
    obj, cam, _ = sample_pairs(state, rng, 400_000)
    keep = np.all((obj >= lo) & (obj <= hi), axis=1)
    wobj, wcam, _ = sample_pairs_in_window(state, rng, 100_000, lo, hi)
    assert np.all((wobj >= lo) & (wobj <= hi))
    assert keep.mean() == pytest.approx(window_probability(state, lo, hi), rel=0.02)
    for ref, got in ((obj[keep], wobj), (cam[keep], wcam)):
        np.testing.assert_allclose(got.mean(axis=0), ref.mean(axis=0), atol=1.5e-5)
        np.testing.assert_allclose(got.std(axis=0), ref.std(axis=0), rtol=0.02)


@pytest.mark.parametrize("pos,mom,expected,tol", [
    (81e-6, 135e-6, 1.16e-2, 1e-4),
    (49e-6, 128e-6, 3.8e-3, 0.1e-3),
    (49e-6, 140e-6, 4.55e-3, 0.05e-3),
])
def test_epr_variance_product_values(pos, mom, expected, tol):
    assert epr_variance_product(pos, mom, 3, 0.300, 710e-9) == pytest.approx(expected, abs=tol)


def test_epr_ideal_widths_violate_bound():
    p = SpdcParams()
    pos = correlation_length_image_plane(p.crystal_length, p.lambda_pump, p.magnification)
    mom = correlation_length_far_field(p.effective_focal, p.pump_sigma_amplitude, p.lambda_down)
    assert epr_variance_product(pos, mom, 3, 0.300, 710e-9) < 0.25


def test_epr_product_oracle():
    # source-plane widths: position /M, momentum k/f_e
    k = 2 * math.pi / 710e-9
    expected = (81e-6 / 3 * 135e-6 * k / 0.3) ** 2
    assert epr_variance_product(81e-6, 135e-6, 3, 0.3, 710e-9) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(DomainError):
        epr_variance_product(0.0, 1e-4, 3, 0.3, 710e-9)


def test_sinc_profile_matches_gaussian_approximation():
    sinc_sigma, gauss_sigma = sinc_phase_matching_width(3e-3, 355e-9)
    assert sinc_sigma == pytest.approx(gauss_sigma, rel=0.15)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-4, 1e-2), st.floats(2e-7, 1e-6), st.floats(0.5, 10))
def test_image_plane_length_scaling(L, lam, M):
    base = correlation_length_image_plane(L, lam, M)
    assert correlation_length_image_plane(4 * L, lam, M) == pytest.approx(2 * base, rel=1e-9)
    assert correlation_length_image_plane(L, lam, 2 * M) == pytest.approx(2 * base, rel=1e-9)
