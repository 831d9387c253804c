"""Millimeter-wave access hop: link budget, fading statistics, interference.

The source-to-relay hop uses maximum-ratio combining over ``n_antennas``
branches of i.i.d. Nakagami-m fading, so the post-combiner SNR is gamma
distributed with integer shape ``n_antennas * m_shape``.  Co-channel
interference at the relay is a sum of independent gamma variates with a
common rate, hence itself gamma distributed.

Conventions used throughout:

* antenna gains and path loss in dB, noise power in dBm, bandwidth in MHz;
* distances in km for attenuation terms and in metres inside the free-space
  log term;
* ``mean_snr`` fields are linear (not dB) mean SNRs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special as sc

from .specfun import log_upper_incomplete_gamma

__all__ = [
    "RfLinkBudget",
    "RfFading",
    "InterferenceModel",
    "NoisePower",
    "rf_power_gain",
    "rf_noise_variance",
    "mean_snr_from_budget",
    "gamma_sr_pdf",
    "gamma_sr_cdf",
    "interference_pdf",
    "mean_inverse_one_plus",
]

_LN10 = math.log(10.0)


@dataclass(frozen=True)
class RfLinkBudget:
    """Deterministic link-budget inputs for the mmWave hop."""

    carrier_ghz: float
    distance_km: float
    tx_gain_dbi: float
    rx_gain_dbi: float
    oxygen_db_per_km: float
    rain_db_per_km: float
    bandwidth_mhz: float
    noise_psd_dbm_mhz: float
    noise_figure_db: float

    def __post_init__(self) -> None:
        if self.carrier_ghz <= 0.0 or self.distance_km <= 0.0:
            raise ValueError("carrier frequency and distance must be positive")
        if self.bandwidth_mhz <= 0.0:
            raise ValueError("bandwidth must be positive")

    @property
    def wavelength_m(self) -> float:
        return 299792458.0 / (self.carrier_ghz * 1e9)


@dataclass(frozen=True)
class RfFading:
    """Post-combiner fading law for the access hop.

    ``m_shape`` must be a positive integer: the finite-sum CDF used by the
    closed-form outage route exists only for integer gamma shape.
    """

    n_antennas: int
    m_shape: int
    mean_snr: float

    def __post_init__(self) -> None:
        if self.n_antennas < 1 or int(self.n_antennas) != self.n_antennas:
            raise ValueError("n_antennas must be a positive integer")
        if self.m_shape < 1 or int(self.m_shape) != self.m_shape:
            raise ValueError("m_shape must be a positive integer (finite-sum CDF)")
        if not (self.mean_snr > 0.0):
            raise ValueError("mean_snr must be positive")

    @property
    def order(self) -> int:
        """Gamma shape of the combined SNR (number of summed branches)."""
        return int(self.n_antennas) * int(self.m_shape)

    @property
    def rate(self) -> float:
        """Gamma rate of the combined SNR, ``order / mean_snr``."""
        return self.order / self.mean_snr


@dataclass(frozen=True)
class InterferenceModel:
    """Aggregate co-channel interference at the relay.

    Each interferer contributes a gamma variate; a common rate ``rate``
    across interferers makes the aggregate gamma with shape ``m_total``.
    ``m_total == 0`` encodes the interference-free case.
    """

    m_total: float
    rate: float

    def __post_init__(self) -> None:
        if self.m_total < 0.0:
            raise ValueError("m_total must be >= 0")
        if self.m_total > 0.0 and not (self.rate > 0.0):
            raise ValueError("rate must be positive when interferers are present")

    @classmethod
    def none(cls) -> "InterferenceModel":
        return cls(m_total=0.0, rate=1.0)

    @classmethod
    def from_interferers(
        cls,
        shapes: tuple[float, ...],
        powers_mw: tuple[float, ...],
        mean_channel_gains: tuple[float, ...],
        noise_mw: float,
        rtol: float = 1e-6,
    ) -> "InterferenceModel":
        """Build the aggregate model from per-interferer parameters.

        The per-interferer rate is ``shape * noise / (gain * power)``; the
        aggregate stays gamma only when these agree, so unequal rates are
        rejected rather than silently averaged.
        """
        if not shapes:
            return cls.none()
        if not (len(shapes) == len(powers_mw) == len(mean_channel_gains)):
            raise ValueError("per-interferer tuples must have equal length")
        rates = [
            m * noise_mw / (omega * p)
            for m, p, omega in zip(shapes, powers_mw, mean_channel_gains)
        ]
        r0 = rates[0]
        for r in rates[1:]:
            if abs(r - r0) > rtol * abs(r0):
                raise ValueError(
                    "interferer rates differ (%r); aggregate is not gamma" % (rates,)
                )
        for m in shapes:
            if m <= 0.0:
                raise ValueError("interferer shapes must be positive")
        return cls(m_total=float(sum(shapes)), rate=float(r0))

    @property
    def active(self) -> bool:
        return self.m_total > 0.0

    @property
    def mean(self) -> float:
        """Mean aggregate INR, ``m_total / rate``."""
        if not self.active:
            return 0.0
        return self.m_total / self.rate


@dataclass(frozen=True)
class NoisePower:
    """Thermal noise power at the relay front end."""

    dbm: float
    mw: float


def rf_power_gain(budget: RfLinkBudget) -> float:
    """Average power gain of the mmWave hop in dB.

    Free-space loss uses the distance in metres; oxygen and rain
    attenuation use dB/km times the distance in km.
    """
    dist_m = budget.distance_km * 1e3
    fspl_db = 20.0 * math.log10(4.0 * math.pi * dist_m / budget.wavelength_m)
    atten_db = (budget.oxygen_db_per_km + budget.rain_db_per_km) * budget.distance_km
    return budget.tx_gain_dbi + budget.rx_gain_dbi - fspl_db - atten_db


def rf_noise_variance(budget: RfLinkBudget) -> NoisePower:
    """Thermal noise power over the signal bandwidth, in dBm and mW."""
    dbm = (
        10.0 * math.log10(budget.bandwidth_mhz)
        + budget.noise_psd_dbm_mhz
        + budget.noise_figure_db
    )
    return NoisePower(dbm=dbm, mw=10.0 ** (dbm / 10.0))


def mean_snr_from_budget(budget: RfLinkBudget, tx_power_dbm: float) -> float:
    """Per-branch mean SNR (linear) implied by the link budget."""
    gain_db = rf_power_gain(budget)
    noise = rf_noise_variance(budget)
    return 10.0 ** ((tx_power_dbm + gain_db - noise.dbm) / 10.0)


def gamma_sr_pdf(gamma, fading: RfFading):
    """PDF of the combined access-hop SNR (gamma law, integer shape)."""
    g = np.asarray(gamma, dtype=float)
    k = fading.order
    lam = fading.rate
    out = np.zeros_like(g)
    pos = g > 0.0
    gp = g[pos]
    out[pos] = np.exp(
        k * math.log(lam) + (k - 1) * np.log(gp) - lam * gp - sc.gammaln(k)
    )
    return out if out.ndim else float(out)


def gamma_sr_cdf(gamma, fading: RfFading):
    """CDF of the combined access-hop SNR.

    For integer shape K this equals the finite Poisson sum
    ``1 - exp(-x) * sum_{n=0}^{K-1} x^n / n!`` with ``x = rate * gamma``
    (the n = 0 term included so the CDF vanishes correctly at the origin).
    It is evaluated as the regularized lower incomplete gamma, which is the
    same function with full relative accuracy in the deep left tail where
    the explicit subtraction would cancel.
    """
    g = np.asarray(gamma, dtype=float)
    out = np.zeros_like(g)
    pos = g > 0.0
    out[pos] = sc.gammainc(fading.order, fading.rate * g[pos])
    return out if out.ndim else float(out)


def interference_pdf(gamma, model: InterferenceModel):
    """PDF of the aggregate interference-to-noise ratio at the relay."""
    if not model.active:
        raise ValueError("interference-free model has no density")
    g = np.asarray(gamma, dtype=float)
    m, beta = model.m_total, model.rate
    out = np.zeros_like(g)
    pos = g > 0.0
    gp = g[pos]
    out[pos] = np.exp(
        m * math.log(beta) + (m - 1.0) * np.log(gp) - beta * gp - sc.gammaln(m)
    )
    return out if out.ndim else float(out)


def mean_inverse_one_plus(model: InterferenceModel) -> float:
    """E[1 / (1 + gamma_I)] for the aggregate interference.

    Exact reduction: for X ~ Gamma(shape m, rate b), a change of variable
    u = b(1 + x) turns the expectation into an upper incomplete gamma of
    (generally negative) order,

        E[1/(1+X)] = b**m * exp(b) * Gamma(1 - m, b),

    evaluated in log space by the package's own incomplete-gamma kernel
    (machine precision for any order down to -200, so arbitrarily strong
    interference is fine -- Gauss-Laguerre node doubling, used before,
    stalls once the 1/(1+x) knee falls below the first node).  Returns
    1.0 for the interference-free model; the value lies in (0, 1].
    """
    if not model.active:
        return 1.0
    m, beta = model.m_total, model.rate
    log_e = m * math.log(beta) + beta + log_upper_incomplete_gamma(1.0 - m, beta)
    return math.exp(log_e)
