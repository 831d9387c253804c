"""End-to-end SINDR composition for the dual-hop mmWave -> FSO relay.

Per-draw hop qualities (first-hop SNR, aggregate interference, FSO SNR)
combine with the scenario-level impairment constants (amplifier
linearization ratio rho1, image-leakage ratio rho2, and the mean effective
first-hop SINR, a statistical constant frozen once per scenario) into the
end-to-end signal-to-interference-noise-and-distortion ratio.  With
rho2 > 0 the SINDR is capped at 1/rho2 regardless of channel quality.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .channel_fso import FsoSnrModel, MalagaParams
from .channel_rf import InterferenceModel, RfFading, mean_inverse_one_plus
from .impairments import BussgangParams, HpaModel, IqImbalance, bussgang_params

__all__ = [
    "LinkState",
    "LinkScenario",
    "effective_relay_sinr",
    "mean_effective_sinr",
    "end_to_end_sindr",
]


@dataclass(frozen=True)
class LinkState:
    """Instantaneous hop qualities plus frozen scenario constants.

    ``gamma_sr``, ``gamma_r``, ``gamma_rd`` may be scalars or equal-shape
    arrays (one entry per trial); the remaining fields are scenario
    constants.
    """

    gamma_sr: np.ndarray | float
    gamma_r: np.ndarray | float
    gamma_rd: np.ndarray | float
    rho1: float
    rho2: float
    mean_eff_snr: float

    def __post_init__(self) -> None:
        if self.rho1 < 1.0 - 1e-12:
            raise ValueError("rho1 must be >= 1")
        if not (0.0 <= self.rho2 < 1.0):
            raise ValueError("rho2 must lie in [0, 1)")
        if self.mean_eff_snr < 0.0:
            raise ValueError("mean effective SNR must be nonnegative")


def effective_relay_sinr(gamma_sr, gamma_r):
    """Instantaneous first-hop SINR gamma_SR / (1 + gamma_R)."""
    return np.asarray(gamma_sr, dtype=float) / (1.0 + np.asarray(gamma_r, dtype=float))


@functools.lru_cache(maxsize=128)
def _cached_inverse_mean(interference: InterferenceModel) -> float:
    return mean_inverse_one_plus(interference)


def mean_effective_sinr(rf: RfFading, interference: InterferenceModel) -> float:
    """E[gamma_SR / (1 + gamma_R)] via independence of the two hops' terms."""
    return rf.mean_snr * _cached_inverse_mean(interference)


def end_to_end_sindr(state: LinkState):
    """Exact end-to-end SINDR of the amplify-and-forward link.

    numerator:   gamma_SR * gamma_RD
    denominator: rho2*gamma_SR*gamma_RD
               + rho1*(1+rho2)*(1+gamma_R)*gamma_RD
               + (1+rho2)*(1+gamma_R)*(mean_eff_snr + rho1)
    """
    gsr = np.asarray(state.gamma_sr, dtype=float)
    gr = np.asarray(state.gamma_r, dtype=float)
    grd = np.asarray(state.gamma_rd, dtype=float)
    one_plus = 1.0 + gr
    num = gsr * grd
    den = (
        state.rho2 * num
        + state.rho1 * (1.0 + state.rho2) * one_plus * grd
        + (1.0 + state.rho2) * one_plus * (state.mean_eff_snr + state.rho1)
    )
    out = num / den
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LinkScenario:
    """Fully resolved operating point shared by both evaluation routes.

    Bundles the hop statistics and impairment models and exposes the
    derived constants of the SINDR formula.  The amplifier linearization
    ``branch`` is carried so output metadata can report which reading was
    used.
    """

    rf: RfFading
    interference: InterferenceModel
    turbulence: MalagaParams
    fso: FsoSnrModel
    hpa: HpaModel
    iq: IqImbalance
    hpa_branch: str = "corrected"

    @property
    def bussgang(self) -> BussgangParams:
        total = self.rf.mean_snr + self.interference.mean
        return bussgang_params(self.hpa, mean_total_snr=total, branch=self.hpa_branch)

    @property
    def rho1(self) -> float:
        return self.bussgang.rho1

    @property
    def rho2(self) -> float:
        return self.iq.ilr

    @property
    def inverse_interference_mean(self) -> float:
        """E[1/(1 + gamma_R)], a scenario constant."""
        return _cached_inverse_mean(self.interference)

    @property
    def mean_eff_snr(self) -> float:
        return self.rf.mean_snr * self.inverse_interference_mean

    @property
    def sindr_ceiling(self) -> float:
        """Supremum of the end-to-end SINDR, 1/rho2 (inf when rho2 = 0)."""
        r2 = self.rho2
        return np.inf if r2 == 0.0 else 1.0 / r2

    def link_state(self, gamma_sr, gamma_r, gamma_rd) -> LinkState:
        return LinkState(
            gamma_sr=gamma_sr,
            gamma_r=gamma_r,
            gamma_rd=gamma_rd,
            rho1=self.rho1,
            rho2=self.rho2,
            mean_eff_snr=self.mean_eff_snr,
        )

    def sindr(self, gamma_sr, gamma_r, gamma_rd):
        """End-to-end SINDR for per-draw hop qualities."""
        return end_to_end_sindr(self.link_state(gamma_sr, gamma_r, gamma_rd))
