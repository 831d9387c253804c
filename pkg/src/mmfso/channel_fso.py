"""Free-space-optical second hop: turbulence, pointing, pathloss, SNR law.

The optical irradiance is a product ``I = I_a * I_p * I_l`` of a
turbulence-induced fluctuation ``I_a`` (Malaga / generalized-K family),
a pointing-error factor ``I_p`` (misalignment jitter) and a deterministic
pathloss ``I_l``.  The relay-to-destination electrical SNR is
``gamma_RD = mu_r * I**r`` with ``r = 1`` for coherent (heterodyne)
detection and ``r = 2`` for intensity modulation / direct detection;
``M``-aperture selection combining takes the best aperture.

Two evaluation routes are provided for the turbulence statistics and kept
deliberately independent:

* the exact density through modified Bessel functions, integrated
  numerically where a CDF is needed (reference route), and
* a truncated power-series expansion of the Bessel kernel with an explicit
  truncation-error bound, which yields polynomial-type CDF coefficients
  that downstream closed forms consume.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.special as sc

from .specfun import log_bessel_k

__all__ = [
    "MalagaParams",
    "PointingParams",
    "PointingGeometry",
    "FsoSnrModel",
    "malaga_pdf",
    "malaga_pdf_truncated",
    "truncation_error_bound",
    "malaga_moment",
    "irradiance_cdf_series",
    "irradiance_cdf_reference",
    "single_aperture_cdf_coefficients",
    "expand_cdf_coefficients",
    "fso_snr_cdf_series",
    "fso_snr_pdf_series",
    "fso_snr_cdf_reference",
    "series_validity_radius",
    "cancellation_radius",
    "escalate_truncation_order",
    "fso_pathloss",
    "pointing_model",
    "pointing_pdf",
    "rytov_variance",
]

_LN10 = math.log(10.0)
_ALPHA_GUARD = 1e-3


@dataclass(frozen=True)
class MalagaParams:
    """Turbulence parameters of the optical fluctuation ``I_a``.

    ``alpha`` (large-scale severity) must stay away from integers because
    the power-series route divides by ``sin(pi*(alpha - n))``; integer
    inputs are nudged by 1e-3 with a warning.  ``beta`` (small-scale
    amount) must be a positive integer for the finite sum to terminate.

    ``g`` (average scattering power coupled to off-axis eddies) and
    ``omega_prime`` (coherent-plus-coupled average power) may be given
    directly, or derived from the physical generator fields ``rho``
    (coupling factor), ``b0`` (total scatter power), ``omega``
    (line-of-sight power) and ``delta_phi`` (phase offset between the LOS
    and coupled components).  When both are supplied they must agree;
    sampling requires the generator fields.
    """

    alpha: float
    beta: int
    g: float
    omega_prime: float
    rho: float | None = None
    b0: float | None = None
    omega: float | None = None
    delta_phi: float = math.pi / 2.0

    def __post_init__(self) -> None:
        if self.beta < 1 or int(self.beta) != self.beta:
            raise ValueError("beta must be a positive integer")
        if not (self.alpha > 0.0):
            raise ValueError("alpha must be positive")
        nearest = round(self.alpha)
        if nearest >= 1 and abs(self.alpha - nearest) < _ALPHA_GUARD:
            nudged = nearest + _ALPHA_GUARD
            warnings.warn(
                "alpha=%g sits on the integer lattice; nudged to %g to keep "
                "the series route finite" % (self.alpha, nudged),
                stacklevel=2,
            )
            object.__setattr__(self, "alpha", nudged)
        if not (self.g > 0.0 and self.omega_prime >= 0.0):
            raise ValueError("g must be positive and omega_prime nonnegative")
        if self.has_generators:
            if not (0.0 <= self.rho <= 1.0):
                raise ValueError("rho must lie in [0, 1]")
            if self.b0 <= 0.0 or self.omega < 0.0:
                raise ValueError("b0 must be positive and omega nonnegative")
            g_gen = 2.0 * self.b0 * (1.0 - self.rho)
            op_gen = (
                self.omega
                + 2.0 * self.b0 * self.rho
                + 2.0
                * math.sqrt(2.0 * self.b0 * self.rho * self.omega)
                * math.cos(self.delta_phi)
            )
            ok_g = abs(self.g - g_gen) <= 1e-6 * max(abs(g_gen), 1e-12)
            ok_op = abs(self.omega_prime - op_gen) <= 1e-6 * max(abs(op_gen), 1e-12)
            if not (ok_g and ok_op):
                raise ValueError(
                    "generator fields imply g=%.6g, omega_prime=%.6g but "
                    "g=%.6g, omega_prime=%.6g were supplied; refusing the "
                    "inconsistent parameter set" % (g_gen, op_gen, self.g, self.omega_prime)
                )

    @classmethod
    def from_generators(
        cls,
        alpha: float,
        beta: int,
        rho: float,
        b0: float,
        omega: float,
        delta_phi: float = math.pi / 2.0,
    ) -> "MalagaParams":
        g = 2.0 * b0 * (1.0 - rho)
        omega_prime = (
            omega
            + 2.0 * b0 * rho
            + 2.0 * math.sqrt(2.0 * b0 * rho * omega) * math.cos(delta_phi)
        )
        return cls(
            alpha=alpha,
            beta=beta,
            g=g,
            omega_prime=omega_prime,
            rho=rho,
            b0=b0,
            omega=omega,
            delta_phi=delta_phi,
        )

    @property
    def has_generators(self) -> bool:
        return self.rho is not None and self.b0 is not None and self.omega is not None

    @property
    def xi(self) -> float:
        """Inverse mean of the small-scale mixture, beta/(g*beta + omega')."""
        return self.beta / (self.g * self.beta + self.omega_prime)

    @property
    def mean(self) -> float:
        """E[I_a] = omega_prime + g (total collected average power)."""
        return self.omega_prime + self.g

    @property
    def log_front(self) -> float:
        """log of the series prefactor 2 (g xi)^beta / (g Gamma(alpha))."""
        return (
            math.log(2.0)
            + self.beta * math.log(self.g * self.xi)
            - math.log(self.g)
            - sc.gammaln(self.alpha)
        )

    @property
    def log_norm(self) -> float:
        """log of the Bessel-form prefactor, front * (alpha*xi)^(alpha/2)."""
        return self.log_front + 0.5 * self.alpha * math.log(self.alpha * self.xi)

    def log_mixture_weight(self, n: int) -> float:
        """log a_n of the Bessel-form mixture weight for n in 1..beta."""
        a, b = self.alpha, self.beta
        if self.omega_prime == 0.0 and n > 1:
            return -math.inf
        los = (
            (n - 1) * (math.log(self.omega_prime) - math.log(self.g))
            if n > 1
            else 0.0
        )
        return (
            math.log(math.comb(b - 1, n - 1))
            + (1.0 - 0.5 * n) * math.log(b / self.xi)
            - sc.gammaln(n)
            + los
            + 0.5 * n * math.log(a / b)
        )

    def signed_series_weight(self, n: int) -> float:
        """w_n of the power-series route: pi*omega_n / (2 sin(pi(alpha-n)))."""
        a = self.alpha
        if self.omega_prime == 0.0 and n > 1:
            return 0.0
        los = (
            (n - 1) * (math.log(self.omega_prime) - math.log(self.g))
            if n > 1
            else 0.0
        )
        log_omega_n = (
            math.log(math.comb(self.beta - 1, n - 1))
            + (1.0 - n) * math.log(self.beta)
            - math.log(self.xi)
            - sc.gammaln(n)
            + los
        )
        s = math.sin(math.pi * (a - n))
        return math.pi / (2.0 * s) * math.exp(log_omega_n)


@dataclass(frozen=True)
class PointingParams:
    """Receiver geometry and jitter for the misalignment factor ``I_p``."""

    radius_m: float
    beam_waist_m: float
    jitter_m: float

    def __post_init__(self) -> None:
        if min(self.radius_m, self.beam_waist_m, self.jitter_m) <= 0.0:
            raise ValueError("radius, beam waist, and jitter must be positive")


@dataclass(frozen=True)
class PointingGeometry:
    """Derived misalignment quantities (see pointing_model)."""

    v: float
    a0: float
    w_zeq_sq: float
    xi_sq: float

    @property
    def mean(self) -> float:
        """E[I_p] = A0 * xi^2 / (xi^2 + 1)."""
        return self.a0 * self.xi_sq / (self.xi_sq + 1.0)

    def moment(self, order: float) -> float:
        """E[I_p^order] = A0^order * xi^2 / (xi^2 + order)."""
        return self.a0**order * self.xi_sq / (self.xi_sq + order)


def pointing_model(p: PointingParams) -> PointingGeometry:
    """Fraction-of-collected-power geometry for a Gaussian beam.

    ``v`` compares the aperture radius to the beam waist; ``a0`` is the
    collected fraction at zero offset; ``w_zeq_sq`` is the equivalent
    beamwidth squared.  The jitter coefficient is
    ``xi_sq = w_zeq_sq / (4 sigma_s^2)``: the first-power form sometimes
    quoted is dimensionally inconsistent, so the squared-length ratio is
    used and cross-validated against the direct sampler.
    """
    v = math.sqrt(math.pi / 2.0) * p.radius_m / p.beam_waist_m
    erf_v = math.erf(v)
    a0 = erf_v * erf_v
    w_zeq_sq = (
        math.sqrt(math.pi) * erf_v * p.beam_waist_m**2 / (2.0 * v * math.exp(-v * v))
    )
    xi_sq = w_zeq_sq / (4.0 * p.jitter_m**2)
    return PointingGeometry(v=v, a0=a0, w_zeq_sq=w_zeq_sq, xi_sq=xi_sq)


def pointing_pdf(i_p, p: PointingParams):
    """Density of the misalignment factor, a power law on (0, A0]."""
    geo = pointing_model(p)
    x = np.asarray(i_p, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0.0) & (x <= geo.a0)
    xs = x[inside]
    out[inside] = geo.xi_sq / geo.a0**geo.xi_sq * xs ** (geo.xi_sq - 1.0)
    return out if out.ndim else float(out)


def rytov_variance(cn2: float, wavelength_m: float, distance_m: float) -> float:
    """Plane-wave Rytov variance 1.23 Cn^2 k^(7/6) L^(11/6)."""
    if min(cn2, wavelength_m, distance_m) <= 0.0:
        raise ValueError("Cn^2, wavelength, and distance must be positive")
    k = 2.0 * math.pi / wavelength_m
    return 1.23 * cn2 * k ** (7.0 / 6.0) * distance_m ** (11.0 / 6.0)


def fso_pathloss(
    radius_m: float,
    divergence_rad: float,
    distance_km: float,
    sigma_db_per_km: float,
) -> float:
    """Deterministic optical pathloss: geometric spreading x attenuation.

    Geometric capture uses the beam footprint at range (distance in m);
    weather attenuation uses the dB/km figure over the range in km.
    """
    if min(radius_m, divergence_rad, distance_km) <= 0.0:
        raise ValueError("geometry inputs must be positive")
    if sigma_db_per_km < 0.0:
        raise ValueError("attenuation must be nonnegative")
    dist_m = distance_km * 1e3
    geometric = math.pi * radius_m**2 / (divergence_rad * dist_m) ** 2
    sigma = sigma_db_per_km * _LN10 / 10.0
    return geometric * math.exp(-sigma * distance_km)


@dataclass(frozen=True)
class FsoSnrModel:
    """Electrical-SNR law of the FSO hop with selection combining.

    ``mu_r`` multiplies the r-th power of the composite irradiance
    ``I_a * I_p * I_l`` directly (raw convention).  The analytic routes
    fold ``pathloss`` and the mean pointing factor into an effective
    multiplier; the sampler applies both factors per draw.
    """

    r: int
    apertures: int
    mu_r: float
    truncation: int = 30
    pathloss: float = 1.0
    pointing: PointingParams | None = None

    def __post_init__(self) -> None:
        if self.r not in (1, 2):
            raise ValueError("detection exponent r must be 1 or 2")
        if self.apertures < 1 or int(self.apertures) != self.apertures:
            raise ValueError("aperture count must be a positive integer")
        if not (self.mu_r > 0.0):
            raise ValueError("mu_r must be positive")
        if self.truncation < 1:
            raise ValueError("truncation order must be >= 1")
        if not (0.0 < self.pathloss <= 1.0):
            raise ValueError("pathloss must lie in (0, 1]")

    @property
    def effective_mu(self) -> float:
        """mu_r with pathloss and the mean pointing factor folded in.

        Exact when pointing is absent; with pointing active this is a
        first-moment fold (flagged upstream as an approximation of the
        analytic route; the sampler is exact).
        """
        scale = self.pathloss
        if self.pointing is not None:
            scale *= pointing_model(self.pointing).mean
        return self.mu_r * scale**self.r


# ---------------------------------------------------------------------------
# Exact density and moments
# ---------------------------------------------------------------------------


def malaga_pdf(i_a, params: MalagaParams):
    """Exact turbulence density via modified Bessel functions."""
    x = np.asarray(i_a, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0.0
    xp = x[pos]
    if xp.size:
        a = params.alpha
        axi = a * params.xi
        arg = 2.0 * np.sqrt(axi * xp)
        acc = np.zeros_like(xp)
        for n in range(1, params.beta + 1):
            logs = (
                params.log_norm
                + params.log_mixture_weight(n)
                + (0.5 * (a + n) - 1.0) * np.log(xp)
                + log_bessel_k(a - n, arg)
            )
            acc += np.exp(logs)
        out[pos] = acc
    return out if out.ndim else float(out)


def malaga_moment(params: MalagaParams, order: float) -> float:
    """E[I_a^order] in closed form (valid for order > -1)."""
    if order <= -1.0:
        raise ValueError("moment exists only for order > -1")
    a = params.alpha
    axi = a * params.xi
    total = 0.0
    for n in range(1, params.beta + 1):
        logs = (
            params.log_norm
            + params.log_mixture_weight(n)
            - math.log(2.0)
            - (order + 0.5 * (a + n)) * math.log(axi)
            + sc.gammaln(a + order)
            + sc.gammaln(n + order)
        )
        total += math.exp(logs)
    return total


# ---------------------------------------------------------------------------
# Power-series route
# ---------------------------------------------------------------------------


def _log_rho(params: MalagaParams, p: np.ndarray, x: float, y: float):
    """log |rho_p(x, y)| and its sign: (alpha xi)^(p+y) / (Gamma(p-x+y+1) p!)."""
    axi = params.alpha * params.xi
    arg = p - x + y + 1.0
    rg = sc.rgamma(arg)
    sign = np.sign(rg)
    with np.errstate(divide="ignore"):
        logs = (p + y) * math.log(axi) + np.log(np.abs(rg)) - sc.gammaln(p + 1.0)
    return logs, sign


@functools.lru_cache(maxsize=64)
def _pdf_series_terms(params: MalagaParams, L: int):
    """Flattened (exponent, coefficient) arrays of the truncated density."""
    a = params.alpha
    front = math.exp(params.log_front)
    p = np.arange(L + 1, dtype=float)
    exps = []
    coefs = []
    for n in range(1, params.beta + 1):
        w = params.signed_series_weight(n)
        lr1, s1 = _log_rho(params, p, a, float(n))
        lr2, s2 = _log_rho(params, p, float(n), a)
        exps.append(p + n - 1.0)
        coefs.append(front * w * s1 * np.exp(lr1))
        exps.append(p + a - 1.0)
        coefs.append(-front * w * s2 * np.exp(lr2))
    return np.concatenate(exps), np.concatenate(coefs)


def malaga_pdf_truncated(i_a, params: MalagaParams, L: int):
    """Power-series density truncated at order L (finite polynomial-type sum)."""
    if L < 1:
        raise ValueError("L must be >= 1")
    exps, coefs = _pdf_series_terms(params, L)
    x = np.asarray(i_a, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0.0
    xp = x[pos]
    if xp.size:
        out[pos] = np.sum(coefs * xp[:, None] ** exps, axis=1)
    return out if out.ndim else float(out)


def truncation_error_bound(i_a, params: MalagaParams, L: int, scan: int = 50):
    """Upper bound on |exact - truncated| density at I_a.

    The discarded tail of each Bessel power series is dominated by pulling
    the slowest-decaying reciprocal-gamma factor out at its worst index
    p > L (scanned over a window because the gamma function is not
    monotone near its minimum) and summing the remaining exponential
    series to e^(alpha xi I_a).
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    a = params.alpha
    axi = a * params.xi
    x = np.asarray(i_a, dtype=float)
    if np.any(x <= 0.0):
        raise ValueError("I_a must be positive")
    p = np.arange(L + 1, L + 1 + scan, dtype=float)
    front = math.exp(params.log_front)
    total = np.zeros_like(x)
    for n in range(1, params.beta + 1):
        w_abs = abs(params.signed_series_weight(n))
        rg_plus = float(np.max(np.abs(sc.rgamma(p - a + n + 1.0))))
        rg_minus = float(np.max(np.abs(sc.rgamma(p - n + a + 1.0))))
        total += (
            front
            * w_abs
            * (
                axi**n * x ** (n - 1.0) * rg_plus
                + axi**a * x ** (a - 1.0) * rg_minus
            )
        )
    with np.errstate(over="ignore"):
        out = total * np.exp(axi * x)  # inf is an honest bound for huge x
    return out if out.ndim else float(out)


@functools.lru_cache(maxsize=64)
def single_aperture_cdf_coefficients(params: MalagaParams, L: int):
    """Coefficient arrays (P, Q) of the integrated single-aperture series.

    The irradiance CDF truncated at order L reads
    ``F(x) = sum_j P[j] x^j  -  x^alpha * sum_t Q[t] x^t`` with integer
    lattices j in [1, L+beta] (P[0] = 0) and t in [0, L].  All prefactors
    are folded into the coefficients.
    """
    a = params.alpha
    front = math.exp(params.log_front)
    P = np.zeros(L + params.beta + 1)
    Q = np.zeros(L + 1)
    p = np.arange(L + 1, dtype=float)
    for n in range(1, params.beta + 1):
        w = params.signed_series_weight(n)
        lr1, s1 = _log_rho(params, p, a, float(n))
        lr2, s2 = _log_rho(params, p, float(n), a)
        j = np.arange(n, n + L + 1)
        P[j] += front * w * s1 * np.exp(lr1) / j
        Q += front * w * s2 * np.exp(lr2) / (p + a)
    return P, Q


def irradiance_cdf_series(x, params: MalagaParams, L: int):
    """Truncated-series CDF of the turbulence factor I_a."""
    P, Q = single_aperture_cdf_coefficients(params, L)
    xv = np.asarray(x, dtype=float)
    out = np.zeros_like(xv)
    pos = xv > 0.0
    xp = xv[pos]
    if xp.size:
        jp = np.arange(P.size, dtype=float)
        tp = np.arange(Q.size, dtype=float)
        poly_p = np.sum(P * xp[:, None] ** jp, axis=1)
        poly_q = np.sum(Q * xp[:, None] ** tp, axis=1)
        out[pos] = poly_p - xp**params.alpha * poly_q
    return out if out.ndim else float(out)


def irradiance_cdf_reference(x, params: MalagaParams) -> float:
    """CDF of I_a by adaptive quadrature of the exact density (scalar)."""
    x = float(x)
    if x <= 0.0:
        return 0.0
    val, _ = scipy.integrate.quad(
        lambda t: malaga_pdf(t, params), 0.0, x, limit=400, epsabs=1e-13, epsrel=1e-12
    )
    return float(val)


def expand_cdf_coefficients(params: MalagaParams, M: int, i: int, L: int, r: int):
    """Coefficients of the i-th binomial slice of the M-aperture CDF power.

    Expanding ``[F(x)]^M = sum_i C(M,i) (-1)^i x^(i alpha) *
    P(x)^(M-i) Q(x)^i`` over the integer exponent lattice, this returns the
    coefficient arrays of ``P(x)^(M-i)`` (indexed by absolute power j, zero
    below j = M-i) and of ``Q(x)^i`` (indexed by t from 0).  The binomial
    sign and count are NOT folded in here.  ``r`` fixes the downstream
    exponent mapping x = (gamma/mu)^(1/r) and is validated only.
    """
    if not (0 <= i <= M):
        raise ValueError("binomial index i must lie in [0, M]")
    if r not in (1, 2):
        raise ValueError("detection exponent r must be 1 or 2")
    P, Q = single_aperture_cdf_coefficients(params, L)
    chi_j = np.array([1.0])
    for _ in range(M - i):
        chi_j = np.convolve(chi_j, P)
    chi_t = np.array([1.0])
    for _ in range(i):
        chi_t = np.convolve(chi_t, Q)
    return chi_j, chi_t


@functools.lru_cache(maxsize=64)
def _snr_series_terms(params: MalagaParams, M: int, L: int, r: int):
    """Per-slice (exponent, coefficient) arrays of the M-aperture SNR CDF.

    Slice i contributes coefficients C(M,i)(-1)^i conv(chi_j, chi_t) on the
    exponent lattice (k + i*alpha)/r applied to gamma/mu.
    """
    slices = []
    for i in range(M + 1):
        chi_j, chi_t = expand_cdf_coefficients(params, M, i, L, r)
        coef = np.convolve(chi_j, chi_t) * math.comb(M, i) * (-1.0) ** i
        exps = (np.arange(coef.size) + i * params.alpha) / r
        slices.append((exps, coef))
    exps = np.concatenate([e for e, _ in slices])
    coefs = np.concatenate([c for _, c in slices])
    keep = coefs != 0.0
    return exps[keep], coefs[keep]


def fso_snr_cdf_series(gamma, model: FsoSnrModel, params: MalagaParams):
    """Series CDF of the best-aperture electrical SNR.

    Valid for gamma below the series validity radius (see
    series_validity_radius); beyond it the alternating series loses
    accuracy and eventually diverges — callers flag and fall back.
    """
    exps, coefs = _snr_series_terms(params, model.apertures, model.truncation, model.r)
    g = np.asarray(gamma, dtype=float)
    out = np.zeros_like(g)
    pos = g > 0.0
    if np.any(pos):
        z = (g[pos] / model.effective_mu) ** (1.0 / model.r)
        out[pos] = np.sum(coefs * z[:, None] ** (exps * model.r), axis=1)
    return out if out.ndim else float(out)


def fso_snr_pdf_series(gamma, model: FsoSnrModel, params: MalagaParams):
    """Term-wise derivative of the series CDF (density of the best-aperture SNR)."""
    exps, coefs = _snr_series_terms(params, model.apertures, model.truncation, model.r)
    g = np.asarray(gamma, dtype=float)
    out = np.zeros_like(g)
    pos = g > 0.0
    if np.any(pos):
        gp = g[pos]
        ratio = gp[:, None] / model.effective_mu
        out[pos] = np.sum(coefs * exps * ratio ** exps, axis=1) / gp
    return out if out.ndim else float(out)


def fso_snr_cdf_reference(gamma, model: FsoSnrModel, params: MalagaParams):
    """Quadrature reference for the SNR CDF: [F_Ia((gamma/mu)^(1/r))]^M.

    Independent of the series coefficients (uses the exact Bessel density),
    so it anchors the series route.  Pointing must be folded/absent: the
    reference shares the effective-mu convention of the series route.
    """
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    out = np.zeros_like(g)
    for idx, gv in enumerate(g):
        if gv <= 0.0:
            continue
        x = (gv / model.effective_mu) ** (1.0 / model.r)
        out[idx] = irradiance_cdf_reference(x, params) ** model.apertures
    return out if np.ndim(gamma) else float(out[0])


def series_validity_radius(
    params: MalagaParams, L: int, tol: float = 1e-10
) -> float:
    """Largest irradiance x at which the truncated series is certified.

    Uses the density truncation bound: the CDF error over [0, x] is at
    most x * bound(x) (the bound is increasing), so the certificate
    requires x * bound(x) <= tol.  Found by bisection on a bracket.
    """
    def over(x: float) -> bool:
        return x * float(truncation_error_bound(x, params, L)) > tol

    lo, hi = 1e-6, 1.0
    if over(lo):
        return 0.0
    while not over(hi) and hi < 1e6:
        lo, hi = hi, hi * 2.0
    if hi >= 1e6:
        return lo
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if over(mid):
            hi = mid
        else:
            lo = mid
    return lo


def cancellation_radius(
    params: MalagaParams, M: int, L: int, r: int, budget: float = 1e-12
) -> float:
    """Largest irradiance x where series round-off stays within ``budget``.

    The alternating lattice sums collapse exponentially large terms into
    an O(1) CDF value; the achievable absolute accuracy in floating point
    is the gross magnitude sum times machine epsilon, regardless of the
    truncation order.  This is the binding radius for double precision;
    the truncation certificate (series_validity_radius) usually reaches
    much further.
    """
    exps, coefs = _snr_series_terms(params, M, L, r)
    logc = np.log(np.abs(coefs))
    powers = exps * r  # exponents in x once gamma = mu * x^r is substituted

    def log_noise(x: float) -> float:
        lx = math.log(x)
        m = float(np.max(logc + powers * lx))
        s = float(np.sum(np.exp(logc + powers * lx - m)))
        return m + math.log(s) + math.log(2.3e-16)

    target = math.log(budget)
    lo, hi = 1e-3, 1.0
    if log_noise(lo) > target:
        return 0.0
    while log_noise(hi) <= target and hi < 1e9:
        lo, hi = hi, hi * 2.0
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if log_noise(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def escalate_truncation_order(
    params: MalagaParams,
    x_needed: float,
    L0: int = 30,
    tol: float = 1e-10,
    L_max: int = 220,
) -> tuple[int, bool]:
    """Smallest truncation order whose validity radius covers x_needed.

    Returns (L, certified); certified is False when even L_max falls
    short, in which case callers must flag the series route.
    """
    L = L0
    while L <= L_max:
        if series_validity_radius(params, L, tol) >= x_needed:
            return L, True
        L = L + max(10, L // 2)
    return L_max, False
