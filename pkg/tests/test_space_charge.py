import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import erf

from ucpking.core import CONSTANTS, DomainError, GaussianIonCloud
from ucpking.space_charge import (
    enclosed_fraction,
    field_profile,
    gaussian_field,
    invert_threshold,
    threshold_coefficient,
    threshold_field,
    threshold_voltage,
)


def _gauss_law_field(cloud, r):
    # independent: integrate the density shell by shell, then Gauss's law
    q, _ = quad(lambda x: 4 * math.pi * x * x * float(cloud.density(x)), 0, r, epsabs=0, epsrel=1e-12)
    return CONSTANTS.elementary_charge * q / (4 * math.pi * CONSTANTS.vacuum_permittivity * r * r)


def test_enclosed_fraction_matches_erf_form():
    x = np.linspace(0.05, 8, 200)
    ref = erf(x / math.sqrt(2)) - math.sqrt(2 / math.pi) * x * np.exp(-x * x / 2)
    assert np.allclose(enclosed_fraction(x), ref, rtol=1e-12, atol=1e-15)


def test_enclosed_fraction_small_x():
    # x^3 / (3 sqrt(pi/2)) as x -> 0, kept to full relative precision
    x = 1e-6
    assert enclosed_fraction(x) == pytest.approx(x**3 / (3 * math.sqrt(math.pi / 2)), rel=1e-9)


@pytest.mark.parametrize("r_over_sigma", [0.3, 1.0, 1.3687, 2.5, 6.0])
def test_field_matches_gauss_law_quadrature(reference_cloud, r_over_sigma):
    r = r_over_sigma * reference_cloud.sigma
    assert gaussian_field(reference_cloud, r) == pytest.approx(_gauss_law_field(reference_cloud, r), rel=1e-10)


def test_field_at_origin_and_negative_radius(reference_cloud):
    assert gaussian_field(reference_cloud, 0.0) == 0.0
    with pytest.raises(DomainError):
        gaussian_field(reference_cloud, -1e-6)


def test_far_field_is_coulomb(reference_cloud):
    r = 20 * reference_cloud.sigma
    coulomb = CONSTANTS.elementary_charge * reference_cloud.ion_count / (4 * math.pi * CONSTANTS.vacuum_permittivity * r * r)
    assert gaussian_field(reference_cloud, r) == pytest.approx(coulomb, rel=1e-12)


def test_threshold_coefficient_frozen():
    coeff, x_star = threshold_coefficient()
    # brute-force grid maximum of 2 pi^{3/2} P(3/2, x^2/2) / x^2
    x = np.linspace(1.0, 2.0, 200001)
    y = 2 * math.pi**1.5 * enclosed_fraction(x) / x**2
    assert coeff == pytest.approx(float(y.max()), rel=1e-10)
    assert x_star == pytest.approx(float(x[np.argmax(y)]), abs=1e-4)
    assert coeff == pytest.approx(2.383235018603287, rel=1e-10)
    assert x_star == pytest.approx(1.3687567425, abs=1e-6)


def test_threshold_equals_profile_maximum(reference_cloud):
    prof = field_profile(reference_cloud, n_points=4001)
    assert prof.max_field >= prof.field_magnitude.max()
    assert prof.field_magnitude.max() == pytest.approx(prof.max_field, rel=1e-5)
    assert prof.location_of_max == pytest.approx(1.3688 * reference_cloud.sigma, rel=1e-4)


def test_threshold_voltage_reference(reference_cloud):
    # 4e5 ions, 250 um, 1.57 mm grid gap
    assert threshold_voltage(reference_cloud, 1.57e-3) == pytest.approx(3.0963032803416026, rel=1e-10)
    with pytest.raises(DomainError):
        threshold_voltage(reference_cloud, 0.0)


def test_field_profile_rejects_unsorted(reference_cloud):
    with pytest.raises(DomainError):
        field_profile(reference_cloud, radii=[0.0, 2e-4, 1e-4])


@given(n=st.floats(1e3, 1e8), sigma=st.floats(1e-5, 1e-3))
@settings(max_examples=60)
def test_invert_threshold_round_trip(n, sigma):
    cloud = GaussianIonCloud(n, sigma)
    back = invert_threshold(threshold_field(cloud), sigma)
    assert back.ion_count == pytest.approx(n, rel=1e-12)


@given(n=st.floats(1e3, 1e8), sigma=st.floats(1e-5, 1e-3), k=st.floats(0.1, 10.0))
@settings(max_examples=60)
def test_threshold_linear_in_n_and_inverse_square_in_sigma(n, sigma, k):
    a = threshold_field(GaussianIonCloud(n, sigma))
    assert threshold_field(GaussianIonCloud(k * n, sigma)) == pytest.approx(k * a, rel=1e-12)
    assert threshold_field(GaussianIonCloud(n, k * sigma)) == pytest.approx(a / k**2, rel=1e-12)


@pytest.mark.parametrize("e_th, sigma", [(0.0, 1e-4), (-1.0, 1e-4), (100.0, 0.0)])
def test_invert_threshold_domain(e_th, sigma):
    with pytest.raises(DomainError):
        invert_threshold(e_th, sigma)
