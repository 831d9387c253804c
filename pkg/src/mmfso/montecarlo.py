"""Monte Carlo route: samplers and estimators with reproducible parallelism.

Each estimator partitions the trial budget into fixed-size chunks; chunk k
draws from an independent counter-based stream keyed by (master seed, k),
and per-chunk partial statistics are combined by a pairwise tree whose
shape depends only on the chunk count.  Results are therefore bit-identical
for any worker count, and workers only change wall-clock time.

A trial is one joint draw of (first-hop SNR, aggregate interference, FSO
SNR); impairment constants enter deterministically through the SINDR
formula, which is already marginalized over waveform-level distortion.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.special as sc

from .channel_fso import FsoSnrModel, MalagaParams, PointingParams, pointing_model
from .channel_rf import InterferenceModel, RfFading
from .sindr import LinkScenario
from .analytic import Modulation, conditional_bep, varpi_for_detection

__all__ = [
    "RngPolicy",
    "EstimateWithCi",
    "sample_gamma_sr",
    "sample_interference",
    "sample_malaga",
    "sample_pointing",
    "sample_fso_snr",
    "sample_sindr",
    "estimate_outage",
    "estimate_ber",
    "estimate_capacity",
]

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class RngPolicy:
    """Master seed plus the per-chunk stream derivation rule."""

    seed: int
    chunk_size: int = 1 << 20

    def __post_init__(self) -> None:
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit value")
        if self.chunk_size < 1:
            raise ValueError("chunk size must be positive")

    def stream(self, chunk_index: int) -> np.random.Generator:
        """Independent generator for one chunk (counter-based keying)."""
        return np.random.Generator(np.random.Philox(key=[self.seed, chunk_index]))

    def chunk_sizes(self, n_trials: int) -> list[int]:
        full, rem = divmod(n_trials, self.chunk_size)
        sizes = [self.chunk_size] * full
        if rem:
            sizes.append(rem)
        return sizes


@dataclass(frozen=True)
class EstimateWithCi:
    """Point estimate with a 95% confidence half-width."""

    value: float
    ci95: float
    trials: int
    elapsed_s: float


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def sample_gamma_sr(fading: RfFading, n: int, rng: np.random.Generator) -> np.ndarray:
    """Combined first-hop SNR draws: Gamma(N*m, mean/(N*m))."""
    return rng.gamma(shape=fading.order, scale=fading.mean_snr / fading.order, size=n)


def sample_interference(
    model: InterferenceModel, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Aggregate INR draws; all-zeros when no interferers are present."""
    if not model.active:
        return np.zeros(n)
    return rng.gamma(shape=model.m_total, scale=1.0 / model.rate, size=n)


def sample_malaga(
    params: MalagaParams, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Turbulence draws as a compound of large-scale gamma and shadowed-Rice.

    Large scale X ~ Gamma(alpha, 1/alpha) (unit mean).  Small scale: a
    line-of-sight phasor of power omega whose amplitude fluctuates with a
    Gamma(beta, 1/beta) power factor shared with the coupled fraction rho
    of the 2*b0 scatter power, plus independent complex-Gaussian scatter of
    power g = 2*b0*(1-rho).  Requires the generator fields; parameter sets
    supplied only through (g, omega_prime) cannot be sampled.
    """
    if not params.has_generators:
        raise ValueError(
            "sampling requires generator fields (rho, b0, omega); this "
            "parameter set supplies only (g, omega_prime)"
        )
    big = rng.gamma(shape=params.alpha, scale=1.0 / params.alpha, size=n)
    shadow = rng.gamma(shape=params.beta, scale=1.0 / params.beta, size=n)
    noise = math.sqrt(params.g / 2.0) * (
        rng.standard_normal(n) + 1j * rng.standard_normal(n)
    )
    los = math.sqrt(params.omega) * np.exp(1j * params.delta_phi) + math.sqrt(
        2.0 * params.b0 * params.rho
    )
    small = np.abs(np.sqrt(shadow) * los + noise) ** 2
    return big * small


def sample_pointing(
    pointing: PointingParams, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Misalignment factor draws from a Rayleigh radial offset."""
    geo = pointing_model(pointing)
    radial = rng.rayleigh(scale=pointing.jitter_m, size=n)
    return geo.a0 * np.exp(-2.0 * radial**2 / geo.w_zeq_sq)


def sample_fso_snr(
    model: FsoSnrModel,
    malaga: MalagaParams,
    pointing: PointingParams | None,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Best-aperture FSO SNR draws: mu_r * (max_m I_a*I_p*I_l)^r.

    Draw order is fixed (per aperture: turbulence, then pointing) so that
    identical streams give identical results.
    """
    best = np.zeros(n)
    for _ in range(model.apertures):
        irr = sample_malaga(malaga, n, rng)
        if pointing is not None:
            irr = irr * sample_pointing(pointing, n, rng)
        np.maximum(best, irr, out=best)
    return model.mu_r * (best * model.pathloss) ** model.r


def sample_sindr(
    scenario: LinkScenario, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Joint-draw end-to-end SINDR samples (fixed draw order per chunk)."""
    gsr = sample_gamma_sr(scenario.rf, n, rng)
    gr = sample_interference(scenario.interference, n, rng)
    grd = sample_fso_snr(
        scenario.fso, scenario.turbulence, scenario.fso.pointing, n, rng
    )
    return scenario.sindr(gsr, gr, grd)


# ---------------------------------------------------------------------------
# Chunked estimation machinery
# ---------------------------------------------------------------------------


def _pairwise_sum(parts: list[np.ndarray]) -> np.ndarray:
    """Reduce per-chunk partials with a tree fixed by the chunk count."""
    vals = list(parts)
    while len(vals) > 1:
        nxt = []
        for i in range(0, len(vals), 2):
            if i + 1 < len(vals):
                nxt.append(vals[i] + vals[i + 1])
            else:
                nxt.append(vals[i])
        vals = nxt
    return vals[0]


def _run_chunks(policy: RngPolicy, n_trials: int, worker_fn, workers: int):
    """Evaluate worker_fn(chunk_index, size, rng) over all chunks in order."""
    sizes = policy.chunk_sizes(n_trials)
    if workers <= 1:
        return [worker_fn(i, s, policy.stream(i)) for i, s in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(worker_fn, i, s, policy.stream(i))
            for i, s in enumerate(sizes)
        ]
        return [f.result() for f in futures]


def _mean_estimate(
    scenario: LinkScenario,
    transform,
    n_trials: int,
    policy: RngPolicy,
    workers: int,
) -> EstimateWithCi:
    t0 = time.perf_counter()

    def work(index: int, size: int, rng: np.random.Generator) -> np.ndarray:
        vals = transform(sample_sindr(scenario, size, rng))
        return np.array([np.add.reduce(vals), np.add.reduce(vals * vals)])

    parts = _run_chunks(policy, n_trials, work, workers)
    s1, s2 = _pairwise_sum(parts)
    mean = s1 / n_trials
    var = max(s2 / n_trials - mean * mean, 0.0) * n_trials / max(n_trials - 1, 1)
    half = _Z95 * math.sqrt(var / n_trials)
    return EstimateWithCi(
        value=float(mean),
        ci95=float(half),
        trials=n_trials,
        elapsed_s=time.perf_counter() - t0,
    )


def estimate_outage(
    scenario: LinkScenario,
    threshold: float,
    n_trials: int,
    policy: RngPolicy,
    workers: int = 1,
) -> EstimateWithCi:
    """Outage probability P[SINDR < threshold] with a Wilson 95% interval."""
    if not (threshold > 0.0):
        raise ValueError("threshold must be positive")
    t0 = time.perf_counter()
    if threshold >= scenario.sindr_ceiling:
        return EstimateWithCi(
            value=1.0, ci95=0.0, trials=n_trials, elapsed_s=time.perf_counter() - t0
        )

    def work(index: int, size: int, rng: np.random.Generator) -> np.ndarray:
        vals = sample_sindr(scenario, size, rng)
        return np.array([np.count_nonzero(vals < threshold)], dtype=np.int64)

    parts = _run_chunks(policy, n_trials, work, workers)
    hits = int(_pairwise_sum(parts)[0])
    p_hat = hits / n_trials
    z2 = _Z95 * _Z95
    denom = 1.0 + z2 / n_trials
    center = (p_hat + z2 / (2.0 * n_trials)) / denom
    half = (
        _Z95
        * math.sqrt(p_hat * (1.0 - p_hat) / n_trials + z2 / (4.0 * n_trials**2))
        / denom
    )
    # report the raw proportion; the Wilson half-width covers it since
    # |p_hat - center| < half for all hit counts
    _ = center
    return EstimateWithCi(
        value=p_hat, ci95=half, trials=n_trials, elapsed_s=time.perf_counter() - t0
    )


def estimate_ber(
    scenario: LinkScenario,
    modulation: Modulation,
    n_trials: int,
    policy: RngPolicy,
    workers: int = 1,
) -> EstimateWithCi:
    """Average bit-error probability: mean conditional BEP at sampled SINDR."""
    if modulation.im_dd_only and scenario.fso.r != 2:
        raise ValueError(
            "%s is defined for intensity-modulation/direct detection (r=2)"
            % modulation.name
        )
    return _mean_estimate(
        scenario,
        lambda g: conditional_bep(g, modulation),
        n_trials,
        policy,
        workers,
    )


def estimate_capacity(
    scenario: LinkScenario,
    n_trials: int,
    policy: RngPolicy,
    workers: int = 1,
) -> EstimateWithCi:
    """Ergodic capacity E[ln(1 + varpi*SINDR)] in nats/s/Hz."""
    varpi = varpi_for_detection(scenario.fso.r)
    return _mean_estimate(
        scenario,
        lambda g: np.log1p(varpi * g),
        n_trials,
        policy,
        workers,
    )
