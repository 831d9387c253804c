"""Amplifier linearization and IQ-imbalance models."""
import cmath
import math

import numpy as np
import pytest
import scipy.integrate as si
from hypothesis import given, settings, strategies as st

from mmfso.impairments import (
    BussgangParams,
    HpaModel,
    IqImbalance,
    arbitrate_bussgang_branch,
    bussgang_params,
    clipping_factor,
    empirical_bussgang,
    hpa_transfer,
    iq_coefficients,
    iq_from_ilr_db,
    relay_gain,
)


def _radial_bussgang(model: HpaModel) -> tuple[float, float]:
    """Independent (eps, sigma_d_sq) by Rayleigh-envelope quadrature."""
    rho_sq = model.rho_sq

    def pdf(r):
        return 2.0 * r / rho_sq * math.exp(-r * r / rho_sq)

    def amp(r):
        if model.kind == "sel":
            return min(r, model.saturation)
        s2 = model.saturation**2
        return s2 * r / (s2 + r * r)

    hi = 40.0 * math.sqrt(rho_sq)
    cross, _ = si.quad(lambda r: r * amp(r) * pdf(r), 0.0, hi, limit=200)
    power, _ = si.quad(lambda r: amp(r) ** 2 * pdf(r), 0.0, hi, limit=200)
    eps = cross / rho_sq
    return eps, power - eps**2 * rho_sq


@pytest.mark.parametrize("kind", ["sel", "twta"])
@pytest.mark.parametrize("ibo_db", [0.0, 4.0])
@pytest.mark.parametrize("rho_sq", [1.0, 2.7])
def test_closed_forms_match_envelope_quadrature(kind, ibo_db, rho_sq):
    model = HpaModel.from_ibo_db(kind, ibo_db, rho_sq=rho_sq)
    bp = bussgang_params(model)
    eps_q, sd_q = _radial_bussgang(model)
    assert bp.eps == pytest.approx(eps_q, rel=1e-8)
    assert bp.sigma_d_sq == pytest.approx(sd_q, rel=1e-6, abs=1e-12)


def test_closed_form_frozen_values():
    bp = bussgang_params(HpaModel.from_ibo_db("sel", 4.0))
    assert bp.eps == pytest.approx(0.9540015967429957, rel=1e-14)
    assert bp.sigma_d_sq == pytest.approx(8.7658766274923972e-03, rel=1e-12)
    bp = bussgang_params(HpaModel.from_ibo_db("twta", 0.0))
    # 1 - e*E1(1): the same constant the interference identity produces
    assert bp.eps == pytest.approx(1.0 - 0.596347362323193, abs=1e-13)
    assert bp.sigma_d_sq == pytest.approx(2.9759272742946957e-02, rel=1e-12)
    assert clipping_factor(HpaModel.from_ibo_db("twta", 4.0)) == pytest.approx(
        0.3907945738711062, rel=1e-12)


def test_ideal_amplifier_is_transparent():
    bp = bussgang_params(HpaModel.ideal())
    assert (bp.eps, bp.sigma_d_sq, bp.rho1) == (1.0, 0.0, 1.0)
    assert clipping_factor(HpaModel.ideal()) == 1.0
    x = np.array([0.3 + 0.1j, -2.0j])
    assert np.allclose(hpa_transfer(x, HpaModel.ideal()), x)


def test_ibo_roundtrip_and_validation():
    model = HpaModel.from_ibo_db("sel", 7.0, rho_sq=3.3)
    assert 10.0 * math.log10(model.ibo) == pytest.approx(7.0, abs=1e-12)
    with pytest.raises(ValueError):
        HpaModel(kind="doherty")
    with pytest.raises(ValueError):
        HpaModel(kind="sel", saturation=0.0)
    with pytest.raises(ValueError):
        bussgang_params(HpaModel.ideal(), branch="folklore")


def test_limiter_transfer_clamps_amplitude_preserving_phase():
    model = HpaModel(kind="sel", saturation=1.5)
    z = 4.0 * cmath.exp(1j * 0.7)
    out = hpa_transfer(z, model)
    assert abs(out) == pytest.approx(1.5, rel=1e-14)
    assert cmath.phase(out) == pytest.approx(0.7, rel=1e-12)
    small = 0.2 * cmath.exp(-1j * 1.1)
    assert hpa_transfer(small, model) == pytest.approx(small)


def test_tube_transfer_peak_and_phase_shift():
    model = HpaModel(kind="twta", saturation=2.0, phase_max=math.pi / 3.0)
    # AM/AM peaks at sat/2 when |x| = sat; AM/PM reaches phase_max/2 there
    out = hpa_transfer(2.0 + 0.0j, model)
    assert abs(out) == pytest.approx(1.0, rel=1e-14)
    assert cmath.phase(out) == pytest.approx(math.pi / 6.0, rel=1e-12)
    mags = np.abs(hpa_transfer(np.linspace(0.01, 50.0, 400) + 0j, model))
    assert mags.max() <= 1.0 + 1e-12


@settings(max_examples=30, deadline=None)
@given(
    kind=st.sampled_from(["sel", "twta"]),
    ibo_db=st.floats(min_value=-15.0, max_value=25.0),
    rho_sq=st.floats(min_value=0.1, max_value=10.0),
    snr=st.floats(min_value=0.0, max_value=1e6),
)
def test_linearization_invariants(kind, ibo_db, rho_sq, snr):
    model = HpaModel.from_ibo_db(kind, ibo_db, rho_sq=rho_sq)
    bp = bussgang_params(model, mean_total_snr=snr)
    assert 0.0 < bp.eps <= 1.0
    assert bp.sigma_d_sq >= 0.0
    assert bp.rho1 >= 1.0
    # more input power to linearize -> worse SNR-to-SNDR ratio
    assert bussgang_params(model, mean_total_snr=snr + 10.0).rho1 >= bp.rho1


def test_backoff_monotonicity():
    for kind in ("sel", "twta"):
        eps = [bussgang_params(HpaModel.from_ibo_db(kind, db)).eps
               for db in (-6.0, 0.0, 6.0, 12.0, 20.0)]
        assert all(b > a for a, b in zip(eps, eps[1:])), kind
        assert eps[-1] < 1.0 + 1e-12


def test_empirical_regression_confirms_closed_forms():
    rng = np.random.default_rng(20260814)
    for kind, ibo_db, rho_sq in (("sel", 4.0, 2.7), ("twta", 0.0, 1.0)):
        model = HpaModel.from_ibo_db(kind, ibo_db, rho_sq=rho_sq)
        bp = bussgang_params(model)
        eps_hat, sd_hat, eps_se, sd_se = empirical_bussgang(model, 400_000, rng)
        assert abs(bp.eps - eps_hat) <= 3.0 * eps_se, kind
        assert abs(bp.sigma_d_sq - sd_hat) <= 3.0 * sd_se, kind


def test_branch_arbitration_prefers_corrected_reading():
    for kind in ("sel", "twta"):
        ev = arbitrate_bussgang_branch(kind, n=150_000)
        assert ev.chosen == "corrected", ev
        assert ev.max_sigma_corrected < ev.max_sigma_printed


def test_printed_branch_differs_once_power_separates_readings():
    model = HpaModel.from_ibo_db("sel", 4.0, rho_sq=2.7)
    corrected = bussgang_params(model, branch="corrected")
    printed = bussgang_params(model, branch="printed")
    assert corrected.eps != pytest.approx(printed.eps, rel=1e-6)


def test_iq_ideal_and_ilr_roundtrip():
    ideal = IqImbalance.ideal()
    assert ideal.nu1 == pytest.approx(1.0)
    assert abs(ideal.nu2) == pytest.approx(0.0, abs=1e-15)
    assert ideal.ilr == pytest.approx(0.0, abs=1e-15)
    iq = iq_from_ilr_db(-15.0)
    assert iq.ilr == pytest.approx(10.0 ** -1.5, rel=1e-12)
    root = math.sqrt(10.0 ** -1.5)
    assert iq.zeta == pytest.approx((1.0 - root) / (1.0 + root), rel=1e-14)
    with pytest.raises(ValueError):
        iq_from_ilr_db(0.0)


def test_iq_coefficients_dual_coded():
    iq = iq_coefficients(zeta=0.9, theta=0.1)
    nu1 = (1.0 + 0.9 * cmath.exp(-1j * 0.1)) / 2.0
    nu2 = (1.0 - 0.9 * cmath.exp(1j * 0.1)) / 2.0
    assert iq.nu1 == pytest.approx(nu1, rel=1e-14)
    assert iq.nu2 == pytest.approx(nu2, rel=1e-14)
    assert iq.ilr == pytest.approx(abs(nu2) ** 2 / abs(nu1) ** 2, rel=1e-14)
    with pytest.raises(ValueError):
        iq_coefficients(zeta=0.0, theta=0.0)


def test_relay_gain_normalizes_input_power():
    g = relay_gain(p_s=2.0, a_sr=0.5, n_antennas=2, p_r=1.0,
                   mean_channel_powers=(1.3, 0.7), noise_var=0.1, rho_sq=1.0)
    denom = 2.0 * 0.5 * 1.3 / 2 + 1.0 * 0.7 + 0.1
    assert g**2 * denom == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        relay_gain(0.0, 0.5, 2, 1.0, (1.0, 1.0), 0.1, 1.0)


def test_bussgang_params_validation():
    with pytest.raises(ValueError):
        BussgangParams(eps=0.0, sigma_d_sq=0.0, rho1=1.0)
    with pytest.raises(ValueError):
        BussgangParams(eps=0.5, sigma_d_sq=-1.0, rho1=1.0)
    with pytest.raises(ValueError):
        BussgangParams(eps=0.5, sigma_d_sq=0.1, rho1=0.5)
