"""Optical-hop turbulence statistics, series machinery, and geometry."""
import math
import warnings

import numpy as np
import pytest
import scipy.integrate as si
import scipy.special as sc
from hypothesis import given, settings, strategies as st

from mmfso.channel_fso import (
    FsoSnrModel,
    MalagaParams,
    PointingParams,
    cancellation_radius,
    escalate_truncation_order,
    fso_pathloss,
    fso_snr_cdf_reference,
    fso_snr_cdf_series,
    fso_snr_pdf_series,
    irradiance_cdf_reference,
    irradiance_cdf_series,
    malaga_moment,
    malaga_pdf,
    malaga_pdf_truncated,
    pointing_model,
    pointing_pdf,
    rytov_variance,
    series_validity_radius,
    truncation_error_bound,
)
from mmfso.checks import figure_turbulence, reference_turbulence


def test_generator_construction_frozen():
    ref = reference_turbulence()
    # 2*b0*(1-rho) and omega + 2*b0*rho (the pi/2 phase kills the cross term)
    assert ref.g == pytest.approx(2.0 * 0.596 * 0.05, rel=1e-14)
    assert ref.omega_prime == pytest.approx(1.32 + 2.0 * 0.596 * 0.95, rel=1e-14)
    fig = figure_turbulence()
    assert fig.g == pytest.approx(1e-3, rel=1e-15)
    assert fig.omega_prime == pytest.approx(ref.omega_prime, rel=1e-15)


def test_generator_consistency_enforced():
    with pytest.raises(ValueError, match="inconsistent"):
        MalagaParams(alpha=2.1, beta=2, g=0.5, omega_prime=1.0,
                     rho=0.95, b0=0.596, omega=1.32)
    # matching generator fields are accepted
    MalagaParams(alpha=2.1, beta=2, g=0.0596, omega_prime=2.4524,
                 rho=0.95, b0=0.596, omega=1.32)


def test_parameter_validation():
    with pytest.raises(ValueError):
        MalagaParams(alpha=2.1, beta=0, g=0.1, omega_prime=1.0)
    with pytest.raises(ValueError):
        MalagaParams(alpha=2.1, beta=2.5, g=0.1, omega_prime=1.0)
    with pytest.raises(ValueError):
        MalagaParams(alpha=-1.0, beta=2, g=0.1, omega_prime=1.0)
    with pytest.raises(ValueError):
        MalagaParams(alpha=2.1, beta=2, g=0.0, omega_prime=1.0)
    with pytest.raises(ValueError):
        MalagaParams(alpha=2.1, beta=2, g=0.1, omega_prime=1.0,
                     rho=1.5, b0=0.5, omega=1.0)


def test_integer_alpha_is_nudged_with_warning():
    with pytest.warns(UserWarning, match="nudged"):
        p = MalagaParams(alpha=2.0, beta=2, g=0.1, omega_prime=1.0)
    assert p.alpha > 2.0  # off the lattice, series denominators finite
    assert math.isfinite(malaga_pdf(1.0, p))


def test_pdf_normalizes_and_matches_closed_moments():
    ref = reference_turbulence()
    norm, _ = si.quad(lambda x: malaga_pdf(x, ref), 0, np.inf, limit=400)
    assert norm == pytest.approx(1.0, abs=1e-10)
    assert malaga_moment(ref, 1.0) == pytest.approx(
        ref.g + ref.omega_prime, rel=1e-13)
    # quadrature of x^2 * pdf over the full axis, frozen
    assert malaga_moment(ref, 2.0) == pytest.approx(
        14.19084803428571, rel=1e-11)


def test_pure_scattering_corner_is_a_distribution():
    # omega_prime = 0: no coherent power, single-branch mixture
    p0 = MalagaParams(alpha=2.1, beta=2, g=0.5, omega_prime=0.0)
    norm, _ = si.quad(lambda x: malaga_pdf(x, p0), 0, np.inf, limit=400)
    mean, _ = si.quad(lambda x: x * malaga_pdf(x, p0), 0, np.inf, limit=400)
    assert norm == pytest.approx(1.0, abs=1e-10)
    assert mean == pytest.approx(p0.g, rel=1e-10)
    assert malaga_moment(p0, 1.0) == pytest.approx(p0.g, rel=1e-12)


def test_truncated_pdf_error_dominated_by_bound():
    # 25 deterministic probes; float-measurable orders only (the L=32
    # bound sits below double-precision noise and needs mpmath to verify)
    fig = figure_turbulence()
    rng = np.random.default_rng(7)
    xs = rng.uniform(0.02, 4.0, 25)
    exact = malaga_pdf(xs, fig)
    sup_prev = None
    for L in (2, 4, 8, 16):
        err = np.abs(exact - malaga_pdf_truncated(xs, fig, L))
        bound = truncation_error_bound(xs, fig, L)
        assert np.all(err <= bound), int(L)
        sup = float(err.max())
        if sup_prev is not None:
            assert sup < sup_prev
        sup_prev = sup


def test_truncation_bound_is_finite_and_monotone_in_order():
    fig = figure_turbulence()
    bounds = [truncation_error_bound(1.3, fig, L) for L in (2, 4, 8, 16, 32)]
    assert all(b > 0.0 and math.isfinite(b) for b in bounds)
    assert all(b2 < b1 for b1, b2 in zip(bounds, bounds[1:]))


def test_irradiance_cdf_series_matches_quadrature_reference():
    ref = reference_turbulence()
    for x in (0.2, 0.8, 1.0):
        s = irradiance_cdf_series(x, ref, 30)
        r = irradiance_cdf_reference(x, ref)
        assert s == pytest.approx(r, rel=1e-10), x


def test_snr_cdf_series_matches_reference_with_selection():
    ref = reference_turbulence()
    model = FsoSnrModel(r=2, apertures=2, mu_r=50.0, truncation=30)
    for gam in (1.0, 10.0, 40.0):
        s = fso_snr_cdf_series(gam, model, ref)
        r = fso_snr_cdf_reference(gam, model, ref)
        assert s == pytest.approx(r, rel=1e-9), gam


def test_snr_pdf_series_is_cdf_derivative():
    ref = reference_turbulence()
    model = FsoSnrModel(r=2, apertures=2, mu_r=50.0, truncation=30)
    for gam in (2.0, 15.0):
        h = 1e-5 * gam
        fd = (fso_snr_cdf_series(gam + h, model, ref)
              - fso_snr_cdf_series(gam - h, model, ref)) / (2.0 * h)
        assert fso_snr_pdf_series(gam, model, ref) == pytest.approx(fd, rel=1e-6)


def test_series_radii_frozen_and_ordered():
    ref = reference_turbulence()
    # alternating-sum cancellation bites long before the analytic radius
    assert cancellation_radius(ref, 2, 30, 2) == pytest.approx(
        1.0371429960993506, rel=1e-12)
    assert series_validity_radius(ref, 30) == pytest.approx(
        27.1498091461060795, rel=1e-12)
    assert cancellation_radius(ref, 2, 30, 2) < series_validity_radius(ref, 30)


def test_validity_radius_grows_with_order():
    ref = reference_turbulence()
    radii = [series_validity_radius(ref, L) for L in (10, 30, 90)]
    assert radii[0] < radii[1] < radii[2]


def test_escalation_reports_honest_certification():
    ref = reference_turbulence()
    order, ok = escalate_truncation_order(ref, 0.9)
    assert ok and order >= 30
    order, ok = escalate_truncation_order(ref, 1e6)
    assert not ok  # no order up to the cap certifies a point that far out


@settings(max_examples=30, deadline=None)
@given(x=st.floats(min_value=1e-3, max_value=30.0))
def test_irradiance_cdf_reference_is_a_distribution(x):
    ref = reference_turbulence()
    c = irradiance_cdf_reference(x, ref)
    assert 0.0 <= c <= 1.0
    assert irradiance_cdf_reference(x + 0.5, ref) >= c


def test_pointing_geometry_dual_coded():
    p = PointingParams(radius_m=0.05, beam_waist_m=2.5, jitter_m=0.3)
    geo = pointing_model(p)
    v = math.sqrt(math.pi) * 0.05 / (math.sqrt(2.0) * 2.5)
    a0 = math.erf(v) ** 2
    w_zeq_sq = 2.5**2 * math.sqrt(math.pi) * math.erf(v) / (
        2.0 * v * math.exp(-v * v))
    assert geo.v == pytest.approx(v, rel=1e-14)
    assert geo.a0 == pytest.approx(a0, rel=1e-14)
    assert geo.w_zeq_sq == pytest.approx(w_zeq_sq, rel=1e-14)
    assert geo.xi_sq == pytest.approx(w_zeq_sq / (4.0 * 0.3**2), rel=1e-14)
    # frozen spot values
    assert geo.a0 == pytest.approx(7.996649950183e-04, rel=1e-10)
    assert geo.xi_sq == pytest.approx(17.368385144360, rel=1e-10)


def test_pointing_pdf_normalizes_with_power_law_moments():
    p = PointingParams(radius_m=0.05, beam_waist_m=2.5, jitter_m=0.3)
    geo = pointing_model(p)
    norm, _ = si.quad(lambda x: pointing_pdf(x, p), 0.0, geo.a0)
    mean, _ = si.quad(lambda x: x * pointing_pdf(x, p), 0.0, geo.a0)
    assert norm == pytest.approx(1.0, rel=1e-10)
    # xi^2/(xi^2+1) * a0 for the power-law on (0, a0)
    assert mean == pytest.approx(
        geo.xi_sq / (geo.xi_sq + 1.0) * geo.a0, rel=1e-10)
    assert pointing_pdf(geo.a0 * 1.01, p) == 0.0


def test_pathloss_dual_coded_and_frozen():
    got = fso_pathloss(radius_m=0.05, divergence_rad=0.010,
                       distance_km=1.0, sigma_db_per_km=0.43)
    geometric = math.pi * 0.05**2 / (0.010 * 1000.0) ** 2
    atten = 10.0 ** (-0.43 * 1.0 / 10.0)
    assert got == pytest.approx(geometric * atten, rel=1e-14)
    assert got == pytest.approx(7.1136072127464040e-05, rel=1e-12)
    with pytest.raises(ValueError):
        fso_pathloss(0.0, 0.01, 1.0, 0.43)
    with pytest.raises(ValueError):
        fso_pathloss(0.05, 0.01, 1.0, -0.1)


def test_rytov_variance_dual_coded_and_frozen():
    got = rytov_variance(cn2=5e-14, wavelength_m=1550e-9, distance_m=1000.0)
    k = 2.0 * math.pi / 1550e-9
    assert got == pytest.approx(1.23 * 5e-14 * k ** (7.0 / 6.0)
                                * 1000.0 ** (11.0 / 6.0), rel=1e-14)
    assert got == pytest.approx(0.9954771925563520, rel=1e-12)
    with pytest.raises(ValueError):
        rytov_variance(0.0, 1550e-9, 1000.0)


def test_snr_model_validation():
    with pytest.raises(ValueError):
        FsoSnrModel(r=3, apertures=2, mu_r=10.0)
    with pytest.raises(ValueError):
        FsoSnrModel(r=2, apertures=0, mu_r=10.0)
    with pytest.raises(ValueError):
        FsoSnrModel(r=2, apertures=2, mu_r=-1.0)
